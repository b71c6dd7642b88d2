#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "flowlab/env.hpp"
#include "flowlab/policy.hpp"
#include "flowlab/replay.hpp"
#include "flowlab/reward.hpp"

namespace flowlab {

// Exact p*(x) = R(x) / Z over an enumerated terminal set.
struct TargetDistribution {
  Env env = Env::string_pa(2, 1);
  std::vector<State> terminals;  // enumeration order
  std::vector<double> rewards;
  std::vector<double> probs;
  std::unordered_map<std::uint64_t, std::size_t> index;  // canonical id -> position
  double z = 0.0;
  double target_mean = 0.0;  // sum R^2 / Z

  // Reward CDF under p*: distinct rewards ascending with P(R < r) and P(R = r).
  std::vector<double> levels;
  std::vector<double> mass_below;
  std::vector<double> mass_at;

  // Canonical ids of the top ceil(0.005 |X|) terminals by reward (ties by
  // enumeration order).
  std::vector<std::uint64_t> modes;

  // P(R < r) + P(R = r) / 2.
  double midpoint_cdf(double r) const;
  bool is_mode(std::uint64_t id) const;
  std::size_t size() const { return terminals.size(); }

 private:
  friend TargetDistribution build_target(const Env&, const RewardFn&, std::uint64_t);
  std::unordered_map<std::uint64_t, char> mode_set_;
};

TargetDistribution build_target(const Env& env, const RewardFn& reward,
                                std::uint64_t budget = kDefaultEnumerationBudget);

inline constexpr double kModeFraction = 0.005;

// p_theta(x) for every terminal by forward DP over reach probabilities,
// keyed by canonical id.
std::unordered_map<std::uint64_t, double> exact_sampler_distribution(
    const PolicyHead& pf, std::uint64_t budget = kDefaultEnumerationBudget);

// 0.5 * sum |p - p*| over all terminals.
double total_variation(const TargetDistribution& target,
                       const std::unordered_map<std::uint64_t, double>& p);

// One-sample Anderson-Darling A^2 of sampled rewards against the exact reward
// CDF under p*, with midpoint handling of ties and the CDF clamped to
// [1e-10, 1 - 1e-10]. Requires at least 10 samples.
double anderson_darling(std::span<const double> sample_rewards, const TargetDistribution& target);

inline constexpr std::size_t kDiversityTopK = 100;

// Mean pairwise distance among the top-100 samples by reward: normalized
// Hamming for strings, 1 - multiset Jaccard for bags.
double diversity(const Env& env, std::span<const State> samples, std::span<const double> rewards);
double distance(const Env& env, const State& a, const State& b);

struct MetricsRecord {
  int round = 0;
  std::size_t n_seen = 0;
  double loss = 0.0;
  double log_z = 0.0;
  double sample_mean_reward = 0.0;
  double target_mean_reward = 0.0;
  double rel_mean_error = 0.0;  // 100 * sample mean / target mean
  double ad_statistic = 0.0;
  std::size_t modes_found = 0;
  double diversity = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

struct SummaryMetrics {
  double sample_mean_reward = 0.0;
  double target_mean_reward = 0.0;
  double rel_mean_error = 0.0;
  double ad_statistic = 0.0;  // NaN with fewer than 10 samples
  std::size_t modes_found = 0;
  double diversity = 0.0;
};

SummaryMetrics summary_metrics(std::span<const State> window_samples,
                               std::span<const double> window_rewards,
                               const TargetDistribution& target, const DatasetX& X);

// First evaluation round whose windowed sample mean reaches the target mean.
std::optional<int> rounds_to_match_target(std::span<const MetricsRecord> log);

}  // namespace flowlab
