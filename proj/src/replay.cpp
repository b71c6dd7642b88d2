#include "flowlab/replay.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "flowlab/error.hpp"
#include "flowlab/mlp.hpp"

namespace flowlab {

DatasetX::DatasetX(Env env, PrtConfig prt) : env_(env), prt_(prt) {
  if (!(prt_.top_fraction > 0.0 && prt_.top_fraction <= 1.0)) {
    throw ConfigError("prt top fraction must be in (0, 1]");
  }
  if (!(prt_.top_batch_fraction >= 0.0 && prt_.top_batch_fraction <= 1.0)) {
    throw ConfigError("prt batch fraction must be in [0, 1]");
  }
}

bool DatasetX::insert(const State& x, double reward, int round) {
  const std::uint64_t id = env_.canonical_id(x);
  if (auto it = index_.find(id); it != index_.end()) {
    if (entries_[it->second].reward != reward) {
      throw Error("reward for '" + env_.to_string(x) + "' changed between observations");
    }
    return false;
  }
  const auto idx = static_cast<std::uint32_t>(entries_.size());
  entries_.push_back(Observation{x, id, reward, round});
  index_.emplace(id, idx);
  // Later insertions rank after earlier ones with equal reward.
  auto pos = std::upper_bound(ranked_.begin(), ranked_.end(), reward,
                              [this](double r, std::uint32_t i) { return r > entries_[i].reward; });
  ranked_.insert(pos, idx);
  return true;
}

bool DatasetX::contains(const State& x) const { return index_.count(env_.canonical_id(x)) > 0; }

std::size_t DatasetX::top_count() const {
  if (entries_.empty()) return 0;
  // Guard against 0.1 * 100 landing a hair above 10.
  const double raw = prt_.top_fraction * static_cast<double>(entries_.size());
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(k, 1, entries_.size());
}

std::vector<std::size_t> DatasetX::prt_sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw std::invalid_argument("prt_sample: batch size must be positive");
  if (entries_.size() < 2) throw std::invalid_argument("prt_sample: needs at least two observations");
  const std::size_t top = top_count();
  const std::size_t rest = entries_.size() - top;
  auto n_top = static_cast<std::size_t>(
      std::ceil(prt_.top_batch_fraction * static_cast<double>(batch_size) - 1e-9));
  n_top = std::min(n_top, batch_size);
  if (rest == 0) n_top = batch_size;
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < n_top; ++i) out.push_back(ranked_[rng.index(top)]);
  for (std::size_t i = n_top; i < batch_size; ++i) out.push_back(ranked_[top + rng.index(rest)]);
  return out;
}

void DatasetX::write_csv(std::ostream& os) const {
  os << "terminal,reward,round_first_seen\n";
  char buf[64];
  for (const auto& e : entries_) {
    std::snprintf(buf, sizeof buf, "%.17g", e.reward);
    os << env_.to_string(e.x) << ',' << buf << ',' << e.round_first_seen << '\n';
  }
}

void DatasetX::write(std::ostream& os) const {
  os << "dataset " << entries_.size() << '\n';
  for (const auto& e : entries_) {
    os << (env_.to_string(e.x).empty() ? "-" : env_.to_string(e.x)) << ' ';
    write_double(os, e.reward);
    os << ' ' << e.round_first_seen << '\n';
  }
}

DatasetX DatasetX::read(std::istream& is, const Env& env, PrtConfig prt) {
  expect_token(is, "dataset");
  std::size_t n = 0;
  is >> n;
  DatasetX data(env, prt);
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    is >> text;
    const double reward = read_double(is);
    int round = 0;
    is >> round;
    if (!is) throw std::runtime_error("checkpoint: truncated dataset");
    data.insert(env.parse(text == "-" ? "" : text), reward, round);
  }
  return data;
}

}  // namespace flowlab
