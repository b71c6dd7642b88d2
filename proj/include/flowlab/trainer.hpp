#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowlab/env.hpp"
#include "flowlab/eval.hpp"
#include "flowlab/mlp.hpp"
#include "flowlab/objectives.hpp"
#include "flowlab/policy.hpp"
#include "flowlab/replay.hpp"
#include "flowlab/reward.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

enum class Objective { tb, maxent, gtb_sub };
// Trajectories used by guided TB: those sampled by the training policy, or
// fresh guide samples for the same terminals.
enum class GuideSource { policy, guide };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view name);
std::string_view to_string(GuideSource g);
GuideSource parse_guide_source(std::string_view name);

struct TrainConfig {
  Objective objective = Objective::tb;
  Parametrization parametrization = Parametrization::sa;
  bool prt = false;
  double alpha = 1.0;
  double epsilon = 0.1;
  double learning_rate = 1e-3;
  double logz_learning_rate = 0.1;
  int rounds = 1000;
  int batch_size = 16;
  int monitor_every = 10;
  int monitor_samples = 128;
  int eval_window_rounds = 500;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {128, 128};
  double guide_smoothing = 0.01;
  GuideSource guide_trajectories = GuideSource::policy;
  double prt_top_fraction = 0.1;
  double prt_batch_fraction = 0.5;
  std::uint64_t enumeration_budget = kDefaultEnumerationBudget;

  // Throws ConfigError on the first invalid field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct RoundResult {
  MetricsRecord record;  // evaluation fields are NaN unless evaluated
  bool evaluated = false;
};

class Trainer {
 public:
  Trainer(const Env& env, const RewardFn& reward, const TrainConfig& config,
          std::shared_ptr<const TargetDistribution> target = nullptr);

  // One active round: sample a batch, insert into X, update, optionally
  // replay, and monitor/evaluate every monitor_every rounds.
  RoundResult run_round();

  int round() const { return round_; }
  const TrainConfig& config() const { return config_; }
  const Env& env() const { return env_; }
  const DatasetX& dataset() const { return X_; }
  const PolicyHead& pf() const { return pf_; }
  // The backward head in use (uniform for maxent).
  const PolicyHead& pb() const { return pb_; }
  double log_z() const { return log_z_; }
  const TargetDistribution& target() const { return *target_; }
  std::int64_t skipped_updates() const { return skipped_; }
  std::int64_t gradient_steps() const { return gradient_steps_; }

  // Monitoring samples inside the evaluation window, oldest first.
  std::vector<State> window_samples() const;
  std::vector<double> window_rewards() const;
  MetricsRecord evaluate() const;

  // Full trainer state in a versioned text format (hexfloat numbers).
  void save(std::ostream& os) const;
  void load(std::istream& is);
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  struct MonitorBatch {
    int round = 0;
    std::vector<State> samples;
    std::vector<double> rewards;
  };

  double update(const std::vector<Trajectory>& batch);
  double tb_update(const std::vector<Trajectory>& batch, const std::vector<double>& rewards);
  double gtb_update(const std::vector<Trajectory>& batch, const std::vector<double>& rewards);
  GuideDistribution& guide_for(const State& x);
  bool apply_forward(const Eigen::VectorXd& grad_pf, double grad_log_z);
  bool apply_backward(const Eigen::VectorXd& grad_pb);
  void monitor();

  Env env_;
  RewardFn reward_;
  TrainConfig config_;
  std::shared_ptr<const TargetDistribution> target_;

  PolicyHead pf_;
  PolicyHead pb_;
  double log_z_ = kLogZInit;
  Adam adam_forward_;
  Adam adam_backward_;
  Rng train_rng_;
  Rng monitor_rng_;
  Rng guide_rng_;
  DatasetX X_;
  std::deque<MonitorBatch> monitor_;
  int round_ = 0;
  double last_loss_ = 0.0;
  std::int64_t skipped_ = 0;
  std::int64_t gradient_steps_ = 0;

  // Guides for the current round's snapshot of X; cleared on insertion.
  std::map<std::uint64_t, std::unique_ptr<GuideDistribution>> guides_;
};

struct ExperimentResult {
  std::vector<MetricsRecord> log;
  std::optional<int> rounds_to_match_target;
  double wall_time_seconds = 0.0;
};

// Runs config.rounds rounds. When output_dir is non-empty, writes
// metrics.csv (flushed per row) and checkpoint.txt there; summary.json is
// written by the caller that knows the full configuration.
ExperimentResult run_experiment(const Env& env, const RewardFn& reward, const TrainConfig& config,
                                std::shared_ptr<const TargetDistribution> target = nullptr,
                                const std::string& output_dir = "");

inline constexpr const char* kMetricsHeader =
    "round,n_seen,loss,logZ,sample_mean_reward,target_mean_reward,rel_mean_error,ad_statistic,modes_found,diversity";

void write_metrics_row(std::ostream& os, const MetricsRecord& rec);

}  // namespace flowlab
