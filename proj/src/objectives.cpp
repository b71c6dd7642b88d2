#include "flowlab/objectives.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "flowlab/error.hpp"

namespace flowlab {

namespace {

Eigen::VectorXd zeros_for(const PolicyHead& head) {
  return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(head.parameter_count()));
}

}  // namespace

TbLoss tb_loss(double log_z, const PolicyHead& pf, const PolicyHead& pb, const Trajectory& tau,
               double reward) {
  TbLoss out;
  out.grad_pf = zeros_for(pf);
  out.grad_pb = zeros_for(pb);
  const double log_pf = traj_log_pf(pf, tau, pf.trainable() ? &out.grad_pf : nullptr);
  const double log_pb = traj_log_pb(pb, tau, pb.trainable() ? &out.grad_pb : nullptr);
  out.residual = log_z + log_pf - std::log(reward) - log_pb;
  out.loss = out.residual * out.residual;
  const double c = 2.0 * out.residual;
  out.grad_pf *= c;
  out.grad_pb *= -c;
  out.grad_log_z = c;
  return out;
}

BackGtbLoss back_gtb_loss(const PolicyHead& pb, const Trajectory& tau, double guide_log_prob) {
  BackGtbLoss out;
  out.grad_pb = zeros_for(pb);
  const double log_pb = traj_log_pb(pb, tau, pb.trainable() ? &out.grad_pb : nullptr);
  out.residual = log_pb - guide_log_prob;
  out.loss = out.residual * out.residual;
  out.grad_pb *= 2.0 * out.residual;
  return out;
}

ForwardGtbLoss forward_gtb_loss(double log_z, const PolicyHead& pf, const PolicyHead& pb,
                                const Trajectory& tau, double reward, double guide_log_prob,
                                double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("forward_gtb_loss: alpha must be in [0, 1]");
  ForwardGtbLoss out;
  out.grad_pf = zeros_for(pf);
  out.psi_f = log_z + traj_log_pf(pf, tau, pf.trainable() ? &out.grad_pf : nullptr);
  out.psi_b = std::log(reward) + alpha * guide_log_prob;
  if (alpha < 1.0) out.psi_b += (1.0 - alpha) * traj_log_pb(pb, tau);
  const double r = out.psi_f - out.psi_b;
  out.loss = r * r;
  out.grad_pf *= 2.0 * r;
  out.grad_log_z = 2.0 * r;
  return out;
}

double substructure_score(const Env& env, const State& s, const State& target,
                          std::span<const Observation> X) {
  if (!env.contains(s, target)) return 0.0;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& obs : X) {
    if (obs.x == target) continue;
    if (env.contains(s, obs.x)) {
      total += obs.reward;
      ++count;
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

GuideDistribution::GuideDistribution(const Env& env, std::span<const Observation> X, State target,
                                     double smoothing)
    : env_(env), X_(X), target_(std::move(target)), smoothing_(smoothing) {
  if (!env_.is_terminal(target_)) throw std::invalid_argument("guide target must be terminal");
  if (smoothing_ < 0.0 || smoothing_ > 1.0) throw std::invalid_argument("guide smoothing must be in [0, 1]");
}

const GuideDistribution::Node& GuideDistribution::node(const State& s, const Node* parent) {
  const auto id = env_.canonical_id(s);
  if (auto it = memo_.find(id); it != memo_.end()) return it->second;
  Node n;
  auto consider = [&](std::uint32_t i) {
    if (X_[i].x != target_ && env_.contains(s, X_[i].x)) n.members.push_back(i);
  };
  if (parent) {
    for (auto i : parent->members) consider(i);
  } else {
    for (std::uint32_t i = 0; i < X_.size(); ++i) consider(i);
  }
  if (env_.contains(s, target_) && !n.members.empty()) {
    double total = 0.0;
    for (auto i : n.members) total += X_[i].reward;
    n.score = total / static_cast<double>(n.members.size());
  }
  return memo_.emplace(id, std::move(n)).first->second;
}

double GuideDistribution::score(const State& s) { return node(s, nullptr).score; }

std::vector<double> GuideDistribution::transition(const State& s) {
  const auto edges = env_.children(s);
  // Copy: inserting children may rehash the memo.
  const Node parent = node(s, nullptr);
  std::vector<double> p(edges.size(), 0.0);
  std::vector<char> inside(edges.size(), 0);
  double total = 0.0;
  std::size_t n_inside = 0;
  for (std::size_t j = 0; j < edges.size(); ++j) {
    if (!env_.contains(edges[j].to, target_)) continue;
    inside[j] = 1;
    ++n_inside;
    p[j] = node(edges[j].to, &parent).score;
    total += p[j];
  }
  if (n_inside == 0) {
    throw std::logic_error("guide: no child of '" + env_.to_string(s) + "' is contained in the target");
  }
  const double uniform = 1.0 / static_cast<double>(n_inside);
  for (std::size_t j = 0; j < edges.size(); ++j) {
    if (!inside[j]) continue;
    const double base = total > 0.0 ? p[j] / total : uniform;
    p[j] = (1.0 - smoothing_) * base + smoothing_ * uniform;
  }
  return p;
}

GuideDistribution::Sample GuideDistribution::sample(Rng& rng) {
  Sample out;
  State s = env_.initial();
  while (!env_.is_terminal(s)) {
    auto edges = env_.children(s);
    const auto p = transition(s);
    const std::size_t pick = rng.categorical(p);
    out.log_prob += std::log(p[pick]);
    s = edges[pick].to;
    out.trajectory.steps.push_back(std::move(edges[pick]));
  }
  out.trajectory.terminal = std::move(s);
  return out;
}

double GuideDistribution::log_prob(const Trajectory& tau) {
  if (!(tau.terminal == target_)) return -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (const auto& step : tau.steps) {
    const auto edges = env_.children(step.from);
    const auto p = transition(step.from);
    total += std::log(p[find_edge(edges, step)]);
  }
  return total;
}

std::vector<double> guide_transition(const Env& env, const State& s, const State& target,
                                     std::span<const Observation> X) {
  GuideDistribution guide(env, X, target);
  return guide.transition(s);
}

GuideDistribution::Sample sample_guide_trajectory(const Env& env, const State& target,
                                                  std::span<const Observation> X, Rng& rng) {
  GuideDistribution guide(env, X, target);
  return guide.sample(rng);
}

namespace {

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace

EntropyEstimate flow_entropy(const PolicyHead& pf, std::uint64_t budget, std::size_t mc_samples,
                             std::uint64_t seed) {
  if (pf.env().state_count() > budget) {
    if (mc_samples == 0) throw BudgetExceeded("exact flow entropy", pf.env().state_count(), budget);
    Rng rng = Rng::substream(seed, "entropy");
    return flow_entropy_monte_carlo(pf, mc_samples, rng);
  }
  EntropyEstimate out;
  forward_reach_dp(pf, budget,
                   [&](const State&, double reach, const std::vector<Edge>&, const std::vector<double>& probs) {
                     if (!probs.empty()) out.value += reach * entropy(probs);
                   });
  return out;
}

EntropyEstimate flow_entropy_monte_carlo(const PolicyHead& pf, std::size_t samples, Rng& rng) {
  if (samples < 2) throw std::invalid_argument("flow_entropy_monte_carlo: need at least two samples");
  const Env& env = pf.env();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    double h = 0.0;
    State s = env.initial();
    while (!env.is_terminal(s)) {
      const auto edges = env.children(s);
      const auto p = pf.distribution(s, edges);
      h += entropy(p);
      s = edges[rng.categorical(p)].to;
    }
    sum += h;
    sum_sq += h * h;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return EntropyEstimate{mean, false, std::sqrt(var / n), samples};
}

}  // namespace flowlab
