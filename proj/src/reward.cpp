#include "flowlab/reward.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

#include "flowlab/error.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::bag_builtin: return "bag_builtin";
    case RewardKind::string_motif: return "string_motif";
    case RewardKind::table: return "table";
  }
  return "?";
}

RewardKind parse_reward_kind(std::string_view name) {
  if (name == "bag_builtin") return RewardKind::bag_builtin;
  if (name == "string_motif") return RewardKind::string_motif;
  if (name == "table") return RewardKind::table;
  throw ConfigError("unknown reward kind '" + std::string(name) + "'");
}

RewardFn RewardFn::bag_builtin(const Env& env, const BagRewardParams& params) {
  if (env.kind() != EnvKind::bag) throw ConfigError("bag_builtin reward requires a bag environment");
  if (!(params.base > 0.0) || !(params.low > 0.0) || !(params.high > 0.0)) {
    throw ConfigError("bag_builtin rewards must be positive");
  }
  if (params.low_probability < 0.0 || params.low_probability > 1.0) {
    throw ConfigError("bag_builtin low_probability must be in [0, 1]");
  }
  RewardFn r(env);
  r.kind_ = RewardKind::bag_builtin;
  r.bag_ = params;
  return r;
}

RewardFn RewardFn::string_motif(const Env& env, const MotifRewardParams& params) {
  if (!env.is_string()) throw ConfigError("string_motif reward requires a string environment");
  if (!(params.base > 0.0)) throw ConfigError("string_motif base reward must be positive");
  if (!(params.exponent > 0.0)) throw ConfigError("reward exponent must be positive");
  RewardFn r(env);
  r.kind_ = RewardKind::string_motif;
  r.motif_base_ = params.base;
  r.exponent_ = params.exponent;
  for (const auto& m : params.motifs) {
    if (m.pattern.empty()) throw ConfigError("empty motif pattern");
    if (m.bonus < 0.0) throw ConfigError("motif bonus must be nonnegative: " + m.pattern);
    State pattern;
    for (char ch : m.pattern) {
      const int c = ch - 'a';
      if (c < 0 || c >= env.alphabet_size()) {
        throw ConfigError("motif '" + m.pattern + "' uses a symbol outside the alphabet");
      }
      pattern.data.push_back(static_cast<std::uint8_t>(c));
    }
    r.motifs_.emplace_back(std::move(pattern), m.bonus);
  }
  if (params.max_scale > 0.0) {
    double best = 0.0;
    env.for_each_terminal(kDefaultEnumerationBudget,
                          [&](const State& x) { best = std::max(best, r(x)); });
    r.scale_ = params.max_scale / best;
  }
  return r;
}

RewardFn RewardFn::table(const Env& env, std::unordered_map<std::uint64_t, double> rewards) {
  for (const auto& [id, value] : rewards) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw ConfigError("reward table entries must be positive and finite");
    }
  }
  RewardFn r(env);
  r.kind_ = RewardKind::table;
  r.table_ = std::move(rewards);
  return r;
}

double RewardFn::operator()(const State& x) const {
  switch (kind_) {
    case RewardKind::bag_builtin: {
      const int max_count = *std::max_element(x.data.begin(), x.data.end());
      if (max_count < bag_.threshold) return bag_.base;
      // Per-terminal coin, fixed by (seed, x).
      const std::uint64_t h = splitmix64(bag_.seed ^ splitmix64(env_.canonical_id(x)));
      const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
      return u < bag_.low_probability ? bag_.low : bag_.high;
    }
    case RewardKind::string_motif: {
      double raw = motif_base_;
      for (const auto& [pattern, bonus] : motifs_) {
        if (std::search(x.data.begin(), x.data.end(), pattern.data.begin(), pattern.data.end()) !=
            x.data.end()) {
          raw += bonus;
        }
      }
      return scale_ * std::pow(raw, exponent_);
    }
    case RewardKind::table: {
      auto it = table_.find(env_.canonical_id(x));
      if (it == table_.end()) {
        throw Error("reward table has no entry for terminal '" + env_.to_string(x) + "'");
      }
      return it->second;
    }
  }
  return 0.0;
}

std::vector<double> transform_scores(const std::vector<double>& raw, double exponent,
                                     double max_scale) {
  if (!(exponent > 0.0)) throw ConfigError("reward exponent must be positive");
  if (!(max_scale > 0.0)) throw ConfigError("max_scale must be positive");
  std::vector<double> out(raw.size());
  if (raw.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  const double floor_value = 1e-6 * max_scale;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double normalized = span > 0.0 ? (raw[i] - lo) / span : 1.0;
    out[i] = std::max(std::pow(normalized, exponent) * max_scale, floor_value);
  }
  return out;
}

namespace {

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
  return s.substr(start);
}

}  // namespace

RewardFn load_reward_table(const std::string& path, const Env& env, double exponent,
                           double max_scale) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open reward table");

  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw ParseError(path, 1, "empty file, expected header 'sequence,score'");
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  if (trim(line) != "sequence,score") {
    throw ParseError(path, line_no, "expected header 'sequence,score'");
  }

  std::vector<std::uint64_t> ids;
  std::vector<double> raw;
  std::unordered_map<std::uint64_t, int> first_line;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError(path, line_no, "expected exactly two fields");
    }
    const std::string seq = trim(line.substr(0, comma));
    const std::string score_text = trim(line.substr(comma + 1));
    if (static_cast<int>(seq.size()) != env.horizon()) {
      throw ParseError(path, line_no,
                       "sequence '" + seq + "' has length " + std::to_string(seq.size()) +
                           ", expected " + std::to_string(env.horizon()));
    }
    State x;
    try {
      x = env.parse(seq);
    } catch (const std::invalid_argument& e) {
      throw ParseError(path, line_no, e.what());
    }
    double score = 0.0;
    const char* first = score_text.data();
    const char* last = first + score_text.size();
    auto [ptr, ec] = std::from_chars(first, last, score);
    if (ec != std::errc() || ptr != last || !std::isfinite(score)) {
      throw ParseError(path, line_no, "score '" + score_text + "' is not a finite number");
    }
    const std::uint64_t id = env.canonical_id(x);
    auto [it, inserted] = first_line.emplace(id, line_no);
    if (!inserted) {
      throw ParseError(path, line_no,
                       "duplicate sequence '" + seq + "' (first seen on line " +
                           std::to_string(it->second) + ")");
    }
    ids.push_back(id);
    raw.push_back(score);
  }
  if (ids.empty()) throw ParseError(path, line_no, "reward table has no rows");

  const auto rewards = transform_scores(raw, exponent, max_scale);
  std::unordered_map<std::uint64_t, double> table;
  table.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) table.emplace(ids[i], rewards[i]);
  return RewardFn::table(env, std::move(table));
}

}  // namespace flowlab
