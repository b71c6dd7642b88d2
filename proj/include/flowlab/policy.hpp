#pragma once

// Forward/backward policy parametrizations over the edges of an Env:
//   sa   - state -> one logit per action slot, illegal slots masked
//   ssr  - (state, neighbour state) -> scalar score; exp(score) is the
//          relative edge flow, normalized over the legal edges
//   tabular_uniform - uniform over legal edges, no parameters

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "flowlab/env.hpp"
#include "flowlab/mlp.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

enum class Parametrization { sa, ssr, tabular_uniform };
enum class Direction { forward, backward };

std::string_view to_string(Parametrization p);
Parametrization parse_parametrization(std::string_view name);

inline constexpr double kLogitClip = 50.0;
inline constexpr double kLogZInit = 5.0;

class PolicyHead {
 public:
  PolicyHead() = default;
  static PolicyHead uniform(const Env& env, Direction direction);
  static PolicyHead learned(const Env& env, Parametrization kind, Direction direction,
                            const std::vector<int>& hidden, Rng& rng);
  // Learned head around an existing network (shape must match).
  static PolicyHead from_net(const Env& env, Parametrization kind, Direction direction, Mlp net);

  const Env& env() const { return env_; }
  Parametrization kind() const { return kind_; }
  Direction direction() const { return direction_; }
  bool trainable() const { return kind_ != Parametrization::tabular_uniform; }
  std::size_t parameter_count() const { return trainable() ? net_.parameter_count() : 0; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  // Children for a forward head, parents for a backward head.
  std::vector<Edge> edges(const State& s) const;

  // Logits after clipping into [-kLogitClip, kLogitClip], one per edge.
  std::vector<double> logits(const State& s, std::span<const Edge> edges) const;
  std::vector<double> distribution(const State& s, std::span<const Edge> edges) const;
  std::vector<double> distribution(const State& s) const;

  // log P(edges[chosen] | s). When grad is non-null, adds
  // coeff * d log P / d params into it.
  double log_prob(const State& s, std::span<const Edge> edges, std::size_t chosen,
                  Eigen::VectorXd* grad = nullptr, double coeff = 1.0) const;

  bool operator==(const PolicyHead& o) const {
    return env_ == o.env_ && kind_ == o.kind_ && direction_ == o.direction_ && net_ == o.net_;
  }

 private:
  friend class TrajectoryBatch;
  PolicyHead(const Env& env, Parametrization kind, Direction direction)
      : env_(env), kind_(kind), direction_(direction) {}

  // Raw (unclipped) logits, optionally recording the tape for backprop.
  std::vector<double> raw_logits(const State& s, std::span<const Edge> edges,
                                 Mlp::Tape* tape) const;
  int input_size() const;
  int output_size() const;

  Env env_ = Env::string_pa(2, 1);
  Parametrization kind_ = Parametrization::tabular_uniform;
  Direction direction_ = Direction::forward;
  Mlp net_;
};

// Per-edge probability over env.children(s) / env.parents(s).
std::vector<double> pf_distribution(const PolicyHead& head, const State& s);
std::vector<double> pb_distribution(const PolicyHead& head, const State& s);

// Index of the edge in `edges` carrying the action of `step` (matched by
// action and, for backward edges, by source state).
std::size_t find_edge(std::span<const Edge> edges, const Edge& step);

// Sum of per-step log P_F. Adds coeff * gradient into grad when non-null.
double traj_log_pf(const PolicyHead& pf, const Trajectory& tau, Eigen::VectorXd* grad = nullptr,
                   double coeff = 1.0);
// Sum of per-step log P_B(s_{t-1} | s_t).
double traj_log_pb(const PolicyHead& pb, const Trajectory& tau, Eigen::VectorXd* grad = nullptr,
                   double coeff = 1.0);

// Log-probabilities of a set of trajectories under one head, computed with a
// single network pass over every step. Matches traj_log_pf / traj_log_pb.
class TrajectoryBatch {
 public:
  TrajectoryBatch(const PolicyHead& head, std::span<const Trajectory> batch);

  const std::vector<double>& log_probs() const { return log_probs_; }
  // grad += sum_i coeffs[i] * d log P(tau_i) / d params.
  void accumulate_gradient(std::span<const double> coeffs, Eigen::VectorXd& grad) const;

 private:
  struct Step {
    std::size_t trajectory = 0;
    std::size_t begin = 0;  // into targets_/probs_/inside_
    std::size_t count = 0;
    std::size_t chosen = 0;
    Eigen::Index column = 0;  // sa: the step's column
  };
  const PolicyHead* head_;
  std::vector<Step> steps_;
  std::vector<Eigen::Index> targets_;  // sa: output slot; ssr: column
  std::vector<double> probs_;
  std::vector<char> inside_;
  std::vector<double> log_probs_;
  Eigen::Index columns_ = 0;
  Mlp::Tape tape_;
};

// At each step, with probability epsilon take a uniformly random legal
// edge, otherwise sample the head's distribution.
Trajectory sample_forward_trajectory(const PolicyHead& pf, double epsilon, Rng& rng);
// Walk parents from x to the source under pb; returned in forward order.
Trajectory sample_backward_trajectory(const PolicyHead& pb, const State& x, Rng& rng);

// Visits every state reachable under pf in topological (level) order with
// its reach probability; terminal states are visited with empty edges.
// Throws BudgetExceeded when env.state_count() > budget.
using ReachVisitor = std::function<void(const State& s, double reach, const std::vector<Edge>& edges,
                                        const std::vector<double>& probs)>;
void forward_reach_dp(const PolicyHead& pf, std::uint64_t budget, const ReachVisitor& visit);

// Every trajectory from the source that ends in x (backward DFS).
std::vector<Trajectory> enumerate_trajectories(const Env& env, const State& x);

// Trajectory-flow table over all trajectories ending in a set of terminals.
// State and edge flows are sums over the trajectories through them.
class TabularTrajectoryFlow {
 public:
  TabularTrajectoryFlow(const Env& env, const std::vector<State>& terminals, double epsilon);

  const Env& env() const { return env_; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const std::vector<double>& flows() const { return flows_; }
  std::vector<double>& flows() { return flows_; }
  // Index into the terminal list for each trajectory.
  const std::vector<std::size_t>& terminal_of() const { return terminal_of_; }
  const std::vector<State>& terminals() const { return terminals_; }

  double terminal_flow(const State& x) const;
  double state_flow(const State& s) const;
  double edge_flow(const State& from, Action a) const;
  // Edge flow / state flow over env.children(s) and env.parents(s).
  std::vector<double> induced_forward(const State& s) const;
  std::vector<double> induced_backward(const State& s) const;

 private:
  Env env_;
  std::vector<State> terminals_;
  std::vector<Trajectory> trajectories_;
  std::vector<std::size_t> terminal_of_;
  std::vector<double> flows_;
};

}  // namespace flowlab
