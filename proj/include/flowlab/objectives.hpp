#pragma once

// Training losses (trajectory balance, maximum-entropy TB, guided TB) and
// the substructure guide distribution.

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "flowlab/env.hpp"
#include "flowlab/policy.hpp"
#include "flowlab/replay.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

struct TbLoss {
  double loss = 0.0;
  double residual = 0.0;  // log Z + log P_F(tau) - log R - log P_B(tau)
  Eigen::VectorXd grad_pf;
  Eigen::VectorXd grad_pb;  // empty when pb is not trainable (MaxEnt)
  double grad_log_z = 0.0;
};

// (log Z + sum log P_F - log R - sum log P_B)^2. Passing a uniform backward
// head gives the maximum-entropy objective.
TbLoss tb_loss(double log_z, const PolicyHead& pf, const PolicyHead& pb, const Trajectory& tau,
               double reward);

struct BackGtbLoss {
  double loss = 0.0;
  double residual = 0.0;  // log P_B(tau) - log p_guide(tau)
  Eigen::VectorXd grad_pb;
};

// Fits P_B to the guide: (sum log P_B - log p_guide(tau))^2.
BackGtbLoss back_gtb_loss(const PolicyHead& pb, const Trajectory& tau, double guide_log_prob);

struct ForwardGtbLoss {
  double loss = 0.0;
  double psi_f = 0.0;
  double psi_b = 0.0;
  Eigen::VectorXd grad_pf;
  double grad_log_z = 0.0;
};

// (psi_f - psi_b)^2 with psi_f = log Z + sum log P_F and
// psi_b = log R + alpha * log p_guide + (1 - alpha) * sum log P_B.
// psi_b is a fixed target: gradients reach log Z and P_F only.
ForwardGtbLoss forward_gtb_loss(double log_z, const PolicyHead& pf, const PolicyHead& pb,
                                const Trajectory& tau, double reward, double guide_log_prob,
                                double alpha);

// phi(s | target, X): 0 unless s is contained in the target; otherwise the
// mean reward of the *other* members of X that contain s (0 if none).
double substructure_score(const Env& env, const State& s, const State& target,
                          std::span<const Observation> X);

// Substructure guide over trajectories ending in one target. Transitions are
// proportional to child scores; when every child scores 0 the guide is
// uniform over children contained in the target. `smoothing` mixes in that
// uniform distribution with the given weight (0 gives the exact guide).
//
// Scores are memoized per state together with the members of X that contain
// the state; a child's members are filtered from its parent's, since no
// descendant of s can be contained in an x that does not contain s.
// Not thread-safe (memo); use one instance per thread.
class GuideDistribution {
 public:
  GuideDistribution(const Env& env, std::span<const Observation> X, State target,
                    double smoothing = 0.0);

  const State& target() const { return target_; }
  double score(const State& s);
  // Probabilities over env.children(s).
  std::vector<double> transition(const State& s);

  struct Sample {
    Trajectory trajectory;
    double log_prob = 0.0;
  };
  Sample sample(Rng& rng);
  // Exact log-probability of tau under the guide (-inf if impossible).
  double log_prob(const Trajectory& tau);

 private:
  struct Node {
    std::vector<std::uint32_t> members;  // indices into X (target excluded)
    double score = 0.0;
  };
  const Node& node(const State& s, const Node* parent);

  Env env_;
  std::span<const Observation> X_;
  State target_;
  double smoothing_ = 0.0;
  std::unordered_map<std::uint64_t, Node> memo_;
};

std::vector<double> guide_transition(const Env& env, const State& s, const State& target,
                                     std::span<const Observation> X);
GuideDistribution::Sample sample_guide_trajectory(const Env& env, const State& target,
                                                  std::span<const Observation> X, Rng& rng);

struct EntropyEstimate {
  double value = 0.0;
  bool exact = true;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

// E_{tau ~ P_F} sum_t H[P_F(. | s_t)] over edges. Exact by forward DP when
// the state space fits the budget; otherwise a Monte-Carlo estimate with
// `mc_samples` trajectories if mc_samples > 0, else BudgetExceeded.
EntropyEstimate flow_entropy(const PolicyHead& pf, std::uint64_t budget = kDefaultEnumerationBudget,
                             std::size_t mc_samples = 0, std::uint64_t seed = 0);
EntropyEstimate flow_entropy_monte_carlo(const PolicyHead& pf, std::size_t samples, Rng& rng);

}  // namespace flowlab
