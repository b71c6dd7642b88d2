#include "flowlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "flowlab/error.hpp"

namespace flowlab {

double TargetDistribution::midpoint_cdf(double r) const {
  auto it = std::lower_bound(levels.begin(), levels.end(), r);
  const auto i = static_cast<std::size_t>(it - levels.begin());
  if (it != levels.end() && *it == r) return mass_below[i] + 0.5 * mass_at[i];
  // Not an attainable reward: everything below r.
  return i < levels.size() ? mass_below[i] : 1.0;
}

bool TargetDistribution::is_mode(std::uint64_t id) const { return mode_set_.count(id) > 0; }

TargetDistribution build_target(const Env& env, const RewardFn& reward, std::uint64_t budget) {
  TargetDistribution t;
  t.env = env;
  env.for_each_terminal(budget, [&](const State& x) {
    t.index.emplace(env.canonical_id(x), t.terminals.size());
    t.terminals.push_back(x);
    t.rewards.push_back(reward(x));
  });
  double sq = 0.0;
  for (double r : t.rewards) {
    if (!(r > 0.0) || !std::isfinite(r)) throw Error("reward must be positive and finite");
    t.z += r;
    sq += r * r;
  }
  t.target_mean = sq / t.z;
  t.probs.resize(t.rewards.size());
  for (std::size_t i = 0; i < t.rewards.size(); ++i) t.probs[i] = t.rewards[i] / t.z;

  std::map<double, double> mass;
  for (std::size_t i = 0; i < t.rewards.size(); ++i) mass[t.rewards[i]] += t.probs[i];
  double below = 0.0;
  for (const auto& [r, m] : mass) {
    t.levels.push_back(r);
    t.mass_below.push_back(below);
    t.mass_at.push_back(m);
    below += m;
  }

  std::vector<std::size_t> order(t.rewards.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return t.rewards[a] > t.rewards[b]; });
  const auto n_modes = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(kModeFraction * static_cast<double>(order.size()) - 1e-9)));
  for (std::size_t i = 0; i < n_modes; ++i) {
    const auto id = env.canonical_id(t.terminals[order[i]]);
    t.modes.push_back(id);
    t.mode_set_.emplace(id, 1);
  }
  return t;
}

std::unordered_map<std::uint64_t, double> exact_sampler_distribution(const PolicyHead& pf,
                                                                     std::uint64_t budget) {
  std::unordered_map<std::uint64_t, double> out;
  const Env& env = pf.env();
  forward_reach_dp(pf, budget,
                   [&](const State& s, double reach, const std::vector<Edge>& edges, const std::vector<double>&) {
                     if (edges.empty()) out.emplace(env.canonical_id(s), reach);
                   });
  return out;
}

double total_variation(const TargetDistribution& target,
                       const std::unordered_map<std::uint64_t, double>& p) {
  double tv = 0.0;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < target.terminals.size(); ++i) {
    double q = 0.0;
    if (auto it = p.find(target.env.canonical_id(target.terminals[i])); it != p.end()) {
      q = it->second;
      ++matched;
    }
    tv += std::abs(q - target.probs[i]);
  }
  // Mass on ids outside the target (should not happen) counts fully.
  if (matched != p.size()) {
    for (const auto& [id, q] : p) {
      if (!target.index.count(id)) tv += q;
    }
  }
  return 0.5 * tv;
}

double anderson_darling(std::span<const double> sample_rewards, const TargetDistribution& target) {
  if (sample_rewards.empty()) throw std::invalid_argument("anderson_darling: empty sample");
  if (sample_rewards.size() < 10) throw std::invalid_argument("anderson_darling: needs at least 10 samples");
  constexpr double lo = 1e-10;
  constexpr double hi = 1.0 - 1e-10;
  std::vector<double> u(sample_rewards.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = std::clamp(target.midpoint_cdf(sample_rewards[i]), lo, hi);
  }
  std::sort(u.begin(), u.end());
  const auto n = static_cast<double>(u.size());
  const std::size_t m = u.size();
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    s += (2.0 * static_cast<double>(i) + 1.0) * (std::log(u[i]) + std::log1p(-u[m - 1 - i]));
  }
  return -n - s / n;
}

double distance(const Env& env, const State& a, const State& b) {
  if (env.is_string()) {
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) diff += a.data[i] != b.data[i];
    return static_cast<double>(diff) / static_cast<double>(a.data.size());
  }
  double inter = 0.0;
  double uni = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    inter += std::min(a.data[i], b.data[i]);
    uni += std::max(a.data[i], b.data[i]);
  }
  return uni > 0.0 ? 1.0 - inter / uni : 0.0;
}

double diversity(const Env& env, std::span<const State> samples, std::span<const double> rewards) {
  if (samples.size() != rewards.size()) throw std::invalid_argument("diversity: size mismatch");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rewards[a] > rewards[b]; });
  order.resize(std::min(order.size(), kDiversityTopK));
  if (order.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      total += distance(env, samples[order[i]], samples[order[j]]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

SummaryMetrics summary_metrics(std::span<const State> window_samples,
                               std::span<const double> window_rewards,
                               const TargetDistribution& target, const DatasetX& X) {
  SummaryMetrics m;
  m.target_mean_reward = target.target_mean;
  if (!window_rewards.empty()) {
    m.sample_mean_reward = std::accumulate(window_rewards.begin(), window_rewards.end(), 0.0) /
                           static_cast<double>(window_rewards.size());
  }
  m.rel_mean_error = 100.0 * m.sample_mean_reward / target.target_mean;
  m.ad_statistic = window_rewards.size() >= 10 ? anderson_darling(window_rewards, target)
                                               : std::numeric_limits<double>::quiet_NaN();
  for (const auto& obs : X.entries()) m.modes_found += target.is_mode(obs.id);
  m.diversity = diversity(target.env, window_samples, window_rewards);
  return m;
}

std::optional<int> rounds_to_match_target(std::span<const MetricsRecord> log) {
  for (const auto& rec : log) {
    if (rec.sample_mean_reward >= rec.target_mean_reward) return rec.round;
  }
  return std::nullopt;
}

}  // namespace flowlab
