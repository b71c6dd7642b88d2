#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowlab/env.hpp"

namespace flowlab {

enum class RewardKind { bag_builtin, string_motif, table };

std::string_view to_string(RewardKind kind);
RewardKind parse_reward_kind(std::string_view name);

struct Motif {
  std::string pattern;  // letters a, b, c, ...
  double bonus = 0.0;

  bool operator==(const Motif&) const = default;
};

struct BagRewardParams {
  double base = 0.01;
  int threshold = 7;  // any symbol repeated at least this often
  double low = 10.0;
  double high = 30.0;
  double low_probability = 0.75;
  std::uint64_t seed = 0;
};

struct MotifRewardParams {
  double base = 0.1;
  std::vector<Motif> motifs;
  double exponent = 1.0;
  // When positive, rewards are rescaled so the largest over all terminals
  // equals this value (requires enumeration at construction).
  double max_scale = 0.0;
};

// R(x) > 0 for every terminal. Immutable after construction.
class RewardFn {
 public:
  static RewardFn bag_builtin(const Env& env, const BagRewardParams& params);
  static RewardFn string_motif(const Env& env, const MotifRewardParams& params);
  // Reads a `sequence,score` CSV. See load_reward_table.
  static RewardFn table(const Env& env, std::unordered_map<std::uint64_t, double> rewards);

  RewardKind kind() const { return kind_; }
  double operator()(const State& x) const;
  const Env& env() const { return env_; }

 private:
  explicit RewardFn(const Env& env) : env_(env) {}

  Env env_;
  RewardKind kind_ = RewardKind::string_motif;
  BagRewardParams bag_;
  std::vector<std::pair<State, double>> motifs_;
  double motif_base_ = 0.0;
  double exponent_ = 1.0;
  double scale_ = 1.0;
  std::unordered_map<std::uint64_t, double> table_;
};

// Min-max normalize raw scores to [0,1], raise to `exponent`, rescale so the
// maximum equals `max_scale`. Zero entries are floored at 1e-6 * max_scale.
// A single-row (or constant) table normalizes every entry to 1.
RewardFn load_reward_table(const std::string& path, const Env& env, double exponent,
                           double max_scale);

// Transform used by load_reward_table, exposed for testing.
std::vector<double> transform_scores(const std::vector<double>& raw, double exponent,
                                     double max_scale);

}  // namespace flowlab
