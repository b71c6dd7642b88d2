#include "flowlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "flowlab/error.hpp"

namespace flowlab {

std::string_view to_string(Parametrization p) {
  switch (p) {
    case Parametrization::sa: return "sa";
    case Parametrization::ssr: return "ssr";
    case Parametrization::tabular_uniform: return "tabular_uniform";
  }
  return "?";
}

Parametrization parse_parametrization(std::string_view name) {
  if (name == "sa") return Parametrization::sa;
  if (name == "ssr") return Parametrization::ssr;
  if (name == "tabular_uniform" || name == "uniform") return Parametrization::tabular_uniform;
  throw ConfigError("unknown parametrization '" + std::string(name) + "'");
}

PolicyHead PolicyHead::uniform(const Env& env, Direction direction) {
  return PolicyHead(env, Parametrization::tabular_uniform, direction);
}

int PolicyHead::input_size() const {
  return kind_ == Parametrization::ssr ? 2 * env_.encoding_size() : env_.encoding_size();
}

int PolicyHead::output_size() const {
  if (kind_ == Parametrization::ssr) return 1;
  return direction_ == Direction::forward ? env_.forward_slot_count() : env_.backward_slot_count();
}

PolicyHead PolicyHead::learned(const Env& env, Parametrization kind, Direction direction,
                               const std::vector<int>& hidden, Rng& rng) {
  PolicyHead head(env, kind, direction);
  if (kind == Parametrization::tabular_uniform) return head;
  std::vector<int> sizes{head.input_size()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(head.output_size());
  head.net_ = Mlp(sizes, rng);
  return head;
}

PolicyHead PolicyHead::from_net(const Env& env, Parametrization kind, Direction direction, Mlp net) {
  PolicyHead head(env, kind, direction);
  if (kind == Parametrization::tabular_uniform) return head;
  if (net.input_size() != head.input_size() || net.output_size() != head.output_size()) {
    throw std::invalid_argument("PolicyHead::from_net: network shape does not match environment");
  }
  head.net_ = std::move(net);
  return head;
}

std::vector<Edge> PolicyHead::edges(const State& s) const {
  return direction_ == Direction::forward ? env_.children(s) : env_.parents(s);
}

std::vector<double> PolicyHead::raw_logits(const State& s, std::span<const Edge> edges,
                                           Mlp::Tape* tape) const {
  std::vector<double> raw(edges.size(), 0.0);
  if (kind_ == Parametrization::tabular_uniform || edges.empty()) return raw;
  const int enc = env_.encoding_size();
  if (kind_ == Parametrization::sa) {
    Eigen::MatrixXd input(enc, 1);
    env_.encode_into(s, input.col(0));
    const Eigen::MatrixXd out = tape ? net_.forward(input, *tape) : net_.forward(input);
    for (std::size_t j = 0; j < edges.size(); ++j) {
      const int slot = direction_ == Direction::forward ? env_.forward_slot(edges[j].action)
                                                        : env_.backward_slot(edges[j].action);
      raw[j] = out(slot, 0);
    }
    return raw;
  }
  // ssr: score each (s, neighbour) pair.
  Eigen::MatrixXd input(2 * enc, static_cast<Eigen::Index>(edges.size()));
  Eigen::VectorXd self = env_.encode(s);
  for (std::size_t j = 0; j < edges.size(); ++j) {
    const State& other = direction_ == Direction::forward ? edges[j].to : edges[j].from;
    auto col = input.col(static_cast<Eigen::Index>(j));
    col.head(enc) = self;
    env_.encode_into(other, col.tail(enc));
  }
  const Eigen::MatrixXd out = tape ? net_.forward(input, *tape) : net_.forward(input);
  for (std::size_t j = 0; j < edges.size(); ++j) raw[j] = out(0, static_cast<Eigen::Index>(j));
  return raw;
}

std::vector<double> PolicyHead::logits(const State& s, std::span<const Edge> edges) const {
  auto z = raw_logits(s, edges, nullptr);
  for (double& v : z) v = std::clamp(v, -kLogitClip, kLogitClip);
  return z;
}

namespace {

std::vector<double> softmax(const std::vector<double>& z) {
  std::vector<double> p(z.size());
  if (z.empty()) return p;
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

std::vector<double> PolicyHead::distribution(const State& s, std::span<const Edge> edges) const {
  if (kind_ == Parametrization::tabular_uniform) {
    return std::vector<double>(edges.size(), edges.empty() ? 0.0 : 1.0 / edges.size());
  }
  return softmax(logits(s, edges));
}

std::vector<double> PolicyHead::distribution(const State& s) const {
  const auto e = edges(s);
  return distribution(s, e);
}

double PolicyHead::log_prob(const State& s, std::span<const Edge> edges, std::size_t chosen,
                            Eigen::VectorXd* grad, double coeff) const {
  if (chosen >= edges.size()) throw std::out_of_range("PolicyHead::log_prob: edge index");
  if (kind_ == Parametrization::tabular_uniform) return -std::log(static_cast<double>(edges.size()));

  Mlp::Tape tape;
  const auto raw = raw_logits(s, edges, grad ? &tape : nullptr);
  std::vector<double> z(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) z[j] = std::clamp(raw[j], -kLogitClip, kLogitClip);
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - mx);
  const double log_norm = mx + std::log(total);
  const double lp = z[chosen] - log_norm;

  if (grad) {
    // d log p_chosen / d z_j = [j == chosen] - p_j; zero where the clip is active.
    std::vector<double> dz(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double pj = std::exp(z[j] - log_norm);
      const bool inside = raw[j] > -kLogitClip && raw[j] < kLogitClip;
      dz[j] = inside ? coeff * ((j == chosen ? 1.0 : 0.0) - pj) : 0.0;
    }
    Eigen::MatrixXd out_grad;
    if (kind_ == Parametrization::sa) {
      out_grad = Eigen::MatrixXd::Zero(output_size(), 1);
      for (std::size_t j = 0; j < edges.size(); ++j) {
        const int slot = direction_ == Direction::forward ? env_.forward_slot(edges[j].action)
                                                          : env_.backward_slot(edges[j].action);
        out_grad(slot, 0) += dz[j];
      }
    } else {
      out_grad.resize(1, static_cast<Eigen::Index>(dz.size()));
      for (std::size_t j = 0; j < dz.size(); ++j) out_grad(0, static_cast<Eigen::Index>(j)) = dz[j];
    }
    if (grad->size() != static_cast<Eigen::Index>(net_.parameter_count())) {
      throw std::invalid_argument("PolicyHead::log_prob: gradient buffer has wrong size");
    }
    net_.backward(tape, out_grad, *grad);
  }
  return lp;
}

std::vector<double> pf_distribution(const PolicyHead& head, const State& s) {
  if (head.direction() != Direction::forward) throw std::invalid_argument("pf_distribution: backward head");
  if (head.env().is_terminal(s)) throw std::invalid_argument("pf_distribution: terminal state");
  return head.distribution(s);
}

std::vector<double> pb_distribution(const PolicyHead& head, const State& s) {
  if (head.direction() != Direction::backward) throw std::invalid_argument("pb_distribution: forward head");
  if (head.env().level(s) == 0) throw std::invalid_argument("pb_distribution: source state");
  return head.distribution(s);
}

std::size_t find_edge(std::span<const Edge> edges, const Edge& step) {
  for (std::size_t j = 0; j < edges.size(); ++j) {
    if (edges[j].action == step.action && edges[j].from == step.from) return j;
  }
  throw std::invalid_argument("trajectory step is not a legal edge");
}

double traj_log_pf(const PolicyHead& pf, const Trajectory& tau, Eigen::VectorXd* grad, double coeff) {
  double total = 0.0;
  for (const auto& step : tau.steps) {
    const auto edges = pf.env().children(step.from);
    total += pf.log_prob(step.from, edges, find_edge(edges, step), grad, coeff);
  }
  return total;
}

double traj_log_pb(const PolicyHead& pb, const Trajectory& tau, Eigen::VectorXd* grad, double coeff) {
  double total = 0.0;
  for (const auto& step : tau.steps) {
    const auto edges = pb.env().parents(step.to);
    total += pb.log_prob(step.to, edges, find_edge(edges, step), grad, coeff);
  }
  return total;
}

TrajectoryBatch::TrajectoryBatch(const PolicyHead& head, std::span<const Trajectory> batch)
    : head_(&head), log_probs_(batch.size(), 0.0) {
  const Env& env = head.env();
  const bool forward = head.direction() == Direction::forward;
  std::vector<std::vector<Edge>> edge_lists;
  std::vector<const State*> at;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (const auto& step : batch[i].steps) {
      const State& s = forward ? step.from : step.to;
      auto edges = forward ? env.children(s) : env.parents(s);
      Step st;
      st.trajectory = i;
      st.begin = targets_.size();
      st.count = edges.size();
      st.chosen = find_edge(edges, step);
      if (head.kind() == Parametrization::ssr) {
        for (std::size_t j = 0; j < edges.size(); ++j) targets_.push_back(columns_++);
      } else {
        st.column = columns_++;
        for (const auto& e : edges) {
          targets_.push_back(forward ? env.forward_slot(e.action) : env.backward_slot(e.action));
        }
      }
      steps_.push_back(st);
      edge_lists.push_back(std::move(edges));
      at.push_back(&s);
    }
  }
  probs_.assign(targets_.size(), 0.0);
  inside_.assign(targets_.size(), 1);
  if (!head.trainable()) {
    for (const auto& st : steps_) {
      log_probs_[st.trajectory] -= std::log(static_cast<double>(st.count));
      for (std::size_t j = 0; j < st.count; ++j) probs_[st.begin + j] = 1.0 / static_cast<double>(st.count);
    }
    return;
  }
  const int enc = env.encoding_size();
  Eigen::MatrixXd input(head.input_size(), columns_);
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    const auto& st = steps_[k];
    if (head.kind() == Parametrization::ssr) {
      for (std::size_t j = 0; j < st.count; ++j) {
        const Edge& e = edge_lists[k][j];
        auto col = input.col(targets_[st.begin + j]);
        env.encode_into(*at[k], col.head(enc));
        env.encode_into(forward ? e.to : e.from, col.tail(enc));
      }
    } else {
      env.encode_into(*at[k], input.col(st.column));
    }
  }
  const Eigen::MatrixXd out = head.net().forward(input, tape_);
  std::vector<double> z;
  for (const auto& st : steps_) {
    z.resize(st.count);
    for (std::size_t j = 0; j < st.count; ++j) {
      const Eigen::Index t = targets_[st.begin + j];
      const double raw = head.kind() == Parametrization::ssr ? out(0, t) : out(t, st.column);
      inside_[st.begin + j] = raw > -kLogitClip && raw < kLogitClip;
      z[j] = std::clamp(raw, -kLogitClip, kLogitClip);
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - mx);
    const double log_norm = mx + std::log(total);
    for (std::size_t j = 0; j < st.count; ++j) probs_[st.begin + j] = std::exp(z[j] - log_norm);
    log_probs_[st.trajectory] += z[st.chosen] - log_norm;
  }
}

void TrajectoryBatch::accumulate_gradient(std::span<const double> coeffs, Eigen::VectorXd& grad) const {
  if (coeffs.size() != log_probs_.size()) {
    throw std::invalid_argument("TrajectoryBatch: one coefficient per trajectory required");
  }
  if (!head_->trainable()) return;
  if (grad.size() != static_cast<Eigen::Index>(head_->parameter_count())) {
    throw std::invalid_argument("TrajectoryBatch: gradient buffer has wrong size");
  }
  const bool ssr = head_->kind() == Parametrization::ssr;
  Eigen::MatrixXd out_grad = Eigen::MatrixXd::Zero(ssr ? 1 : head_->output_size(), columns_);
  for (const auto& st : steps_) {
    const double c = coeffs[st.trajectory];
    for (std::size_t j = 0; j < st.count; ++j) {
      const std::size_t k = st.begin + j;
      if (!inside_[k]) continue;
      const double dz = c * ((j == st.chosen ? 1.0 : 0.0) - probs_[k]);
      if (ssr) {
        out_grad(0, targets_[k]) += dz;
      } else {
        out_grad(targets_[k], st.column) += dz;
      }
    }
  }
  head_->net().backward(tape_, out_grad, grad);
}

Trajectory sample_forward_trajectory(const PolicyHead& pf, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon must be in [0, 1]");
  const Env& env = pf.env();
  Trajectory tau;
  State s = env.initial();
  tau.steps.reserve(static_cast<std::size_t>(env.horizon()));
  while (!env.is_terminal(s)) {
    auto edges = env.children(s);
    std::size_t pick;
    if (rng.uniform() < epsilon) {
      pick = rng.index(edges.size());
    } else {
      const auto p = pf.distribution(s, edges);
      pick = rng.categorical(p);
    }
    s = edges[pick].to;
    tau.steps.push_back(std::move(edges[pick]));
  }
  tau.terminal = std::move(s);
  return tau;
}

Trajectory sample_backward_trajectory(const PolicyHead& pb, const State& x, Rng& rng) {
  const Env& env = pb.env();
  if (!env.is_terminal(x)) throw std::invalid_argument("sample_backward_trajectory: x is not terminal");
  Trajectory tau;
  tau.terminal = x;
  State s = x;
  while (env.level(s) > 0) {
    auto edges = env.parents(s);
    const auto p = pb.distribution(s, edges);
    const std::size_t pick = rng.categorical(p);
    s = edges[pick].from;
    tau.steps.push_back(std::move(edges[pick]));
  }
  std::reverse(tau.steps.begin(), tau.steps.end());
  return tau;
}

void forward_reach_dp(const PolicyHead& pf, std::uint64_t budget, const ReachVisitor& visit) {
  const Env& env = pf.env();
  const std::uint64_t states = env.state_count();
  if (states > budget) throw BudgetExceeded("forward dynamic programming", states, budget);
  std::vector<std::pair<State, double>> level{{env.initial(), 1.0}};
  const std::vector<Edge> no_edges;
  const std::vector<double> no_probs;
  for (int l = 0; l <= env.horizon(); ++l) {
    if (l == env.horizon()) {
      for (const auto& [s, reach] : level) visit(s, reach, no_edges, no_probs);
      break;
    }
    std::vector<std::pair<State, double>> next;
    std::unordered_map<std::uint64_t, std::size_t> index;
    next.reserve(static_cast<std::size_t>(env.state_count_at_level(l + 1)));
    for (const auto& [s, reach] : level) {
      const auto edges = env.children(s);
      const auto probs = pf.distribution(s, edges);
      visit(s, reach, edges, probs);
      for (std::size_t j = 0; j < edges.size(); ++j) {
        const auto id = env.canonical_id(edges[j].to);
        auto [it, inserted] = index.emplace(id, next.size());
        if (inserted) next.emplace_back(edges[j].to, 0.0);
        next[it->second].second += reach * probs[j];
      }
    }
    level = std::move(next);
  }
}

namespace {

void collect_backward(const Env& env, const State& s, std::vector<Edge>& stack,
                      std::vector<Trajectory>& out, const State& terminal) {
  if (env.level(s) == 0) {
    Trajectory tau;
    tau.steps.assign(stack.rbegin(), stack.rend());
    tau.terminal = terminal;
    out.push_back(std::move(tau));
    return;
  }
  for (auto& e : env.parents(s)) {
    State from = e.from;
    stack.push_back(std::move(e));
    collect_backward(env, from, stack, out, terminal);
    stack.pop_back();
  }
}

}  // namespace

std::vector<Trajectory> enumerate_trajectories(const Env& env, const State& x) {
  std::vector<Trajectory> out;
  std::vector<Edge> stack;
  collect_backward(env, x, stack, out, x);
  return out;
}

TabularTrajectoryFlow::TabularTrajectoryFlow(const Env& env, const std::vector<State>& terminals,
                                             double epsilon)
    : env_(env), terminals_(terminals) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("trajectory flows must start positive");
  for (std::size_t i = 0; i < terminals_.size(); ++i) {
    for (auto& tau : enumerate_trajectories(env_, terminals_[i])) {
      trajectories_.push_back(std::move(tau));
      terminal_of_.push_back(i);
    }
  }
  flows_.assign(trajectories_.size(), epsilon);
}

double TabularTrajectoryFlow::terminal_flow(const State& x) const {
  double total = 0.0;
  for (std::size_t t = 0; t < trajectories_.size(); ++t) {
    if (trajectories_[t].terminal == x) total += flows_[t];
  }
  return total;
}

double TabularTrajectoryFlow::state_flow(const State& s) const {
  double total = 0.0;
  for (std::size_t t = 0; t < trajectories_.size(); ++t) {
    const auto& tau = trajectories_[t];
    bool through = tau.terminal == s;
    for (const auto& e : tau.steps) through = through || e.from == s;
    if (through) total += flows_[t];
  }
  return total;
}

double TabularTrajectoryFlow::edge_flow(const State& from, Action a) const {
  double total = 0.0;
  for (std::size_t t = 0; t < trajectories_.size(); ++t) {
    for (const auto& e : trajectories_[t].steps) {
      if (e.from == from && e.action == a) {
        total += flows_[t];
        break;
      }
    }
  }
  return total;
}

std::vector<double> TabularTrajectoryFlow::induced_forward(const State& s) const {
  const double fs = state_flow(s);
  std::vector<double> p;
  for (const auto& e : env_.children(s)) p.push_back(fs > 0.0 ? edge_flow(s, e.action) / fs : 0.0);
  return p;
}

std::vector<double> TabularTrajectoryFlow::induced_backward(const State& s) const {
  const double fs = state_flow(s);
  std::vector<double> p;
  for (const auto& e : env_.parents(s)) p.push_back(fs > 0.0 ? edge_flow(e.from, e.action) / fs : 0.0);
  return p;
}

}  // namespace flowlab
