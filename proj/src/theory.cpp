#include "flowlab/theory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "flowlab/objectives.hpp"
#include "flowlab/parallel.hpp"
#include "flowlab/policy.hpp"
#include "flowlab/replay.hpp"

namespace flowlab {

namespace {

using Symbols = std::vector<std::uint8_t>;

std::size_t occurrences(const Symbols& hay, const Symbols& needle) {
  if (needle.size() > hay.size()) return 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    count += std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i));
  }
  return count;
}

std::size_t find_offset(const Symbols& hay, const Symbols& needle) {
  auto it = std::search(hay.begin(), hay.end(), needle.begin(), needle.end());
  return static_cast<std::size_t>(it - hay.begin());
}

std::string letters(const Symbols& s) {
  std::string out;
  for (auto c : s) out.push_back(static_cast<char>('a' + c));
  return out;
}

void check_counts_args(int n, int k, int a) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  if (k < 1 || k > n) throw std::invalid_argument("k must be in [1, n]");
  if (a < 0 || a > n - k) throw std::invalid_argument("a must be in [0, n - k]");
}

}  // namespace

std::vector<State> substrings_of_length(const State& x, int k) {
  std::vector<State> out;
  if (k < 0 || static_cast<std::size_t>(k) > x.data.size()) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= x.data.size(); ++i) {
    State s{Symbols(x.data.begin() + static_cast<std::ptrdiff_t>(i),
                    x.data.begin() + static_cast<std::ptrdiff_t>(i) + k)};
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  }
  return out;
}

SettingA make_setting_a(int n, int k, int a, int a_prime, double r, double r_prime) {
  if (k < 1 || k >= n) throw std::invalid_argument("setting needs 1 <= k < n");
  if (a < 0 || a > n - k || a_prime < 0 || a_prime > n - k) {
    throw std::invalid_argument("placements must be in [0, n - k]");
  }
  SettingA s;
  s.env = Env::string_pa(3, n);
  s.n = n;
  s.k = k;
  s.a = a;
  s.a_prime = a_prime;
  s.r = r;
  s.r_prime = r_prime;
  auto build = [&](int offset, std::uint8_t pad) {
    Symbols out(static_cast<std::size_t>(n), pad);
    std::fill_n(out.begin() + offset, k, std::uint8_t{0});
    return State{out};
  };
  s.x = build(a, 1);
  s.x_prime = build(a_prime, 2);
  s.s_star = State{Symbols(static_cast<std::size_t>(k), 0)};
  validate_setting(s);
  return s;
}

SettingA setting_from_strings(const std::string& x, const std::string& x_prime, int alphabet_size,
                              double r, double r_prime) {
  if (x.size() != x_prime.size()) throw std::invalid_argument("x and x' must have equal length");
  SettingA s;
  s.env = Env::string_pa(alphabet_size, static_cast<int>(x.size()));
  s.x = s.env.parse(x);
  s.x_prime = s.env.parse(x_prime);
  s.n = static_cast<int>(x.size());
  s.r = r;
  s.r_prime = r_prime;
  for (int k = s.n - 1; k >= 1 && s.k == 0; --k) {
    for (const auto& sub : substrings_of_length(s.x, k)) {
      if (occurrences(s.x_prime.data, sub.data) > 0) {
        s.k = k;
        s.s_star = sub;
        break;
      }
    }
  }
  if (s.k == 0) throw SettingError("x and x' share no substring", x + "/" + x_prime);
  s.a = static_cast<int>(find_offset(s.x.data, s.s_star.data));
  s.a_prime = static_cast<int>(find_offset(s.x_prime.data, s.s_star.data));
  validate_setting(s);
  return s;
}

void validate_setting(const SettingA& s) {
  if (s.x == s.x_prime) throw SettingError("x and x' must differ", letters(s.x.data));
  if (s.k < 1 || s.k >= s.n) throw std::invalid_argument("setting needs 1 <= k < n");
  if (static_cast<int>(s.s_star.data.size()) != s.k) throw std::invalid_argument("s* must have length k");
  if (occurrences(s.x.data, s.s_star.data) != 1) throw SettingError("s* must occur exactly once in x", letters(s.s_star.data));
  if (occurrences(s.x_prime.data, s.s_star.data) != 1) {
    throw SettingError("s* must occur exactly once in x'", letters(s.s_star.data));
  }
  for (const auto& sub : substrings_of_length(s.x, s.k)) {
    if (sub != s.s_star && occurrences(s.x_prime.data, sub.data) > 0) {
      throw SettingError("another length-k substring is shared", letters(sub.data));
    }
  }
  for (const auto& sub : substrings_of_length(s.x, s.k + 1)) {
    if (occurrences(s.x_prime.data, sub.data) > 0) throw SettingError("a longer substring is shared", letters(sub.data));
  }
}

void validate_substructure_setting(const SettingA& s) {
  if (s.env.kind() != EnvKind::string_pa) {
    throw Error("substructure optimum needs the prepend/append MDP (each terminal of '" +
                std::string(to_string(s.env.kind())) + "' has a single trajectory)");
  }
  validate_setting(s);
  for (int len = 1; len < s.k; ++len) {
    for (const auto& sub : substrings_of_length(s.x, len)) {
      if (occurrences(s.x_prime.data, sub.data) > 0 && occurrences(s.s_star.data, sub.data) == 0) {
        throw SettingError("a shared substring lies outside s*", letters(sub.data));
      }
    }
  }
}

std::uint64_t count_trajectories(int n) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  if (n - 1 > 62) throw std::overflow_error("trajectory count exceeds 62 bits");
  return std::uint64_t{1} << (n - 1);
}

std::uint64_t count_through(int n, int k, int a) {
  check_counts_args(n, k, a);
  if (k - 1 > 62) throw std::overflow_error("trajectory count exceeds 62 bits");
  const auto c = static_cast<unsigned __int128>(binomial(n - k, a));
  const auto total = c << (k - 1);
  if (total >> 62) throw std::overflow_error("trajectory count exceeds 62 bits");
  return static_cast<std::uint64_t>(total);
}

namespace {

Env distinct_env(int n) {
  if (n < 1 || n > 26) throw std::invalid_argument("brute-force counts need 1 <= n <= 26");
  return Env::string_pa(n, n);
}

State distinct_string(int n) {
  State x;
  for (int i = 0; i < n; ++i) x.data.push_back(static_cast<std::uint8_t>(i));
  return x;
}

}  // namespace

std::uint64_t count_trajectories_dfs(int n) {
  return enumerate_trajectories(distinct_env(n), distinct_string(n)).size();
}

std::uint64_t count_through_dfs(int n, int k, int a) {
  check_counts_args(n, k, a);
  const State x = distinct_string(n);
  const State s{Symbols(x.data.begin() + a, x.data.begin() + a + k)};
  std::uint64_t count = 0;
  for (const auto& tau : enumerate_trajectories(distinct_env(n), x)) {
    count += std::any_of(tau.steps.begin(), tau.steps.end(), [&](const Edge& e) { return e.to == s; });
  }
  return count;
}

std::unordered_map<std::uint64_t, double> backward_flow_dp(
    const Env& env, const std::vector<std::pair<State, double>>& terminal_flows, const BackwardPolicy& pb) {
  std::vector<std::map<std::uint64_t, std::pair<State, double>>> levels(static_cast<std::size_t>(env.horizon()) + 1);
  for (const auto& [x, f] : terminal_flows) {
    if (!env.is_terminal(x)) throw std::invalid_argument("backward_flow_dp: terminal flows must be on terminals");
    auto& slot = levels.back()[env.canonical_id(x)];
    slot.first = x;
    slot.second += f;
  }
  std::unordered_map<std::uint64_t, double> out;
  for (int l = env.horizon(); l >= 0; --l) {
    for (const auto& [id, entry] : levels[static_cast<std::size_t>(l)]) {
      out[id] = entry.second;
      if (l == 0) continue;
      const auto parents = env.parents(entry.first);
      const auto w = pb(entry.first, parents);
      for (std::size_t j = 0; j < parents.size(); ++j) {
        auto& slot = levels[static_cast<std::size_t>(l - 1)][env.canonical_id(parents[j].from)];
        slot.first = parents[j].from;
        slot.second += entry.second * w[j];
      }
    }
  }
  return out;
}

namespace {

SettingFlows summarize(const SettingA& s, const std::unordered_map<std::uint64_t, double>& flow) {
  auto get = [&](const State& st) {
    auto it = flow.find(s.env.canonical_id(st));
    return it == flow.end() ? 0.0 : it->second;
  };
  SettingFlows out;
  out.a = s.a;
  out.a_prime = s.a_prime;
  out.f_star = get(s.s_star);
  auto subs = substrings_of_length(s.x, s.k);
  for (const auto& t : subs) {
    if (t != s.s_star) out.f_rest += get(t);
  }
  for (const auto& t : substrings_of_length(s.x_prime, s.k)) {
    if (t != s.s_star) out.f_rest_prime += get(t);
    if (std::find(subs.begin(), subs.end(), t) == subs.end()) subs.push_back(t);
  }
  for (const auto& t : subs) {
    const double f = get(t);
    out.level_k[s.env.to_string(t)] = f;
    out.level_k_total += f;
  }
  return out;
}

std::vector<std::pair<State, double>> terminal_rewards(const SettingA& s) {
  return {{s.x, s.r}, {s.x_prime, s.r_prime}};
}

}  // namespace

SettingFlows maxent_flows(const SettingA& setting) {
  validate_setting(setting);
  const auto flow = backward_flow_dp(setting.env, terminal_rewards(setting),
                                     [](const State&, const std::vector<Edge>& parents) {
                                       return std::vector<double>(parents.size(), 1.0 / static_cast<double>(parents.size()));
                                     });
  return summarize(setting, flow);
}

namespace {

MaxEntRatio finish(std::vector<SettingFlows> placements, double expected) {
  MaxEntRatio out;
  out.placements = std::move(placements);
  for (const auto& p : out.placements) {
    out.mean_f_star += p.f_star;
    out.mean_f_rest += p.f_rest;
  }
  out.mean_f_star /= static_cast<double>(out.placements.size());
  out.mean_f_rest /= static_cast<double>(out.placements.size());
  out.ratio = out.mean_f_star / out.mean_f_rest;
  out.expected = expected;
  return out;
}

}  // namespace

MaxEntRatio maxent_flow_ratio(int n, int k, double r, double r_prime) {
  std::vector<SettingFlows> placements;
  for (int a = 0; a <= n - k; ++a) {
    for (int ap = 0; ap <= n - k; ++ap) placements.push_back(maxent_flows(make_setting_a(n, k, a, ap, r, r_prime)));
  }
  return finish(std::move(placements), (r + r_prime) / (r * (n - k)));
}

MaxEntRatio maxent_flow_ratio(const SettingA& setting) {
  // Closed form for one placement: a fraction C(n-k, a) / 2^(n-k) of each
  // terminal's flow passes through s*.
  const double span = std::ldexp(1.0, setting.n - setting.k);
  const double share = static_cast<double>(binomial(setting.n - setting.k, setting.a)) / span;
  const double share_prime = static_cast<double>(binomial(setting.n - setting.k, setting.a_prime)) / span;
  const double expected = (setting.r * share + setting.r_prime * share_prime) / (setting.r * (1.0 - share));
  return finish({maxent_flows(setting)}, expected);
}

SettingFlows substructure_guide_flows(const SettingA& setting) {
  const Env& env = setting.env;
  std::vector<Observation> X = {
      {setting.x, env.canonical_id(setting.x), setting.r, 0},
      {setting.x_prime, env.canonical_id(setting.x_prime), setting.r_prime, 0},
  };
  using EdgeKey = std::tuple<std::uint64_t, int, int>;
  std::map<EdgeKey, double> edge_flow;
  std::unordered_map<std::uint64_t, double> state_flow;

  for (const auto& obs : X) {
    GuideDistribution guide(env, X, obs.x);
    std::map<std::uint64_t, std::pair<State, double>> frontier;
    frontier[env.canonical_id(env.initial())] = {env.initial(), 1.0};
    for (int l = 0; l <= env.horizon(); ++l) {
      std::map<std::uint64_t, std::pair<State, double>> next;
      for (const auto& [id, entry] : frontier) {
        const auto& [s, reach] = entry;
        state_flow[id] += obs.reward * reach;
        if (env.is_terminal(s)) continue;
        const auto edges = env.children(s);
        const auto p = guide.transition(s);
        for (std::size_t j = 0; j < edges.size(); ++j) {
          if (p[j] <= 0.0) continue;
          const auto& e = edges[j];
          edge_flow[{id, static_cast<int>(e.action.kind), e.action.symbol}] += obs.reward * reach * p[j];
          auto& slot = next[env.canonical_id(e.to)];
          slot.first = e.to;
          slot.second += reach * p[j];
        }
      }
      frontier = std::move(next);
    }
  }

  // Markovized backward policy: edge flow over state flow.
  const auto flow = backward_flow_dp(
      env, terminal_rewards(setting), [&](const State& child, const std::vector<Edge>& parents) {
        std::vector<double> w(parents.size(), 0.0);
        auto it = state_flow.find(env.canonical_id(child));
        if (it == state_flow.end() || it->second <= 0.0) return w;
        for (std::size_t j = 0; j < parents.size(); ++j) {
          const auto& e = parents[j];
          auto ef = edge_flow.find({env.canonical_id(e.from), static_cast<int>(e.action.kind), e.action.symbol});
          if (ef != edge_flow.end()) w[j] = ef->second / it->second;
        }
        return w;
      });
  return summarize(setting, flow);
}

SubstructureCheck substructure_optimum_check(const SettingA& setting, double tolerance) {
  validate_substructure_setting(setting);
  SubstructureCheck out;
  out.flows = substructure_guide_flows(setting);
  out.expected_f_star = setting.r + setting.r_prime;
  out.holds = std::abs(out.flows.f_star - out.expected_f_star) <= tolerance &&
              std::abs(out.flows.f_rest) <= tolerance && std::abs(out.flows.f_rest_prime) <= tolerance;
  return out;
}

double beta_binomial_pmf(int x, int trials, double alpha, double beta) {
  if (x < 0 || x > trials) return 0.0;
  auto lbeta = [](double p, double q) { return std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q); };
  const double log_choose = std::lgamma(trials + 1.0) - std::lgamma(x + 1.0) - std::lgamma(trials - x + 1.0);
  return std::exp(log_choose + lbeta(x + alpha, trials - x + beta) - lbeta(alpha, beta));
}

double beta_binomial_cdf(int x, int trials, double alpha, double beta) {
  if (x < 0) return 0.0;
  if (x >= trials) return 1.0;
  double total = 0.0;
  for (int i = 0; i <= x; ++i) total += beta_binomial_pmf(i, trials, alpha, beta);
  return std::min(total, 1.0);
}

double polya_exceedance_bound(int n, int k, int m, double epsilon_init, double delta, double psi) {
  if (n - k < 1) throw std::invalid_argument("bound needs n > k");
  const double mean = std::numbers::e / (std::numbers::pi * std::sqrt(static_cast<double>(n - k)));
  const double total = epsilon_init * std::ldexp(1.0, n - 1) / delta;
  const int threshold = static_cast<int>(std::floor(psi * m + 1e-9));
  return std::clamp(1.0 - beta_binomial_cdf(threshold, m, mean * total, (1.0 - mean) * total), 0.0, 1.0);
}

int polya_urn_white_draws(double white, double black, double increment, int draws, Rng& rng) {
  int hits = 0;
  for (int i = 0; i < draws; ++i) {
    if (rng.uniform() * (white + black) < white) {
      white += increment;
      ++hits;
    } else {
      black += increment;
    }
  }
  return hits;
}

PolyaResult tabular_tb_simulate(const SettingA& setting, const PolyaConfig& config) {
  validate_setting(setting);
  if (config.steps <= 0 || config.steps % 2 != 0) throw std::invalid_argument("Polya steps must be positive and even");
  if (config.trials <= 0) throw std::invalid_argument("Polya trials must be positive");
  if (!(config.epsilon_init > 0.0)) throw std::invalid_argument("initial flow must be positive");
  const double lambda = config.lambda > 0.0 ? config.lambda : 2.0 / config.steps;

  const auto tx = enumerate_trajectories(setting.env, setting.x);
  const auto txp = enumerate_trajectories(setting.env, setting.x_prime);
  const std::size_t nx = tx.size();
  const std::size_t total = nx + txp.size();
  std::vector<char> through(total, 0);
  auto passes = [&](const Trajectory& tau) {
    return std::any_of(tau.steps.begin(), tau.steps.end(), [&](const Edge& e) { return e.to == setting.s_star; });
  };
  for (std::size_t i = 0; i < nx; ++i) through[i] = passes(tx[i]);
  for (std::size_t i = 0; i < txp.size(); ++i) through[nx + i] = passes(txp[i]);

  std::vector<double> init = config.initial_flows;
  if (init.empty()) init.assign(total, config.epsilon_init);
  if (init.size() != total) throw std::invalid_argument("initial flows must cover every trajectory of x and x'");

  PolyaResult out;
  const double delta_x = lambda * (setting.r - config.epsilon_init);
  const double delta_xp = lambda * (setting.r_prime - config.epsilon_init);
  out.delta = delta_x;
  const double mean = std::numbers::e / (std::numbers::pi * std::sqrt(static_cast<double>(setting.n - setting.k)));
  const double balls = config.epsilon_init * std::ldexp(1.0, setting.n - 1) / out.delta;
  out.alpha = mean * balls;
  out.beta = (1.0 - mean) * balls;
  out.fractions.assign(static_cast<std::size_t>(config.trials), 0.0);

  parallel_for(static_cast<std::size_t>(config.trials), [&](std::size_t trial) {
    Rng rng = Rng::substream(splitmix64(config.seed + trial), "polya");
    std::vector<double> flow = init;
    double sum_x = 0.0;
    double sum_xp = 0.0;
    for (std::size_t i = 0; i < nx; ++i) sum_x += flow[i];
    for (std::size_t i = nx; i < total; ++i) sum_xp += flow[i];
    double hit = 0.0;
    double all = 0.0;
    for (int step = 0; step < config.steps; ++step) {
      const bool first = step % 2 == 0;
      const std::size_t begin = first ? 0 : nx;
      const std::size_t end = first ? nx : total;
      double& sum = first ? sum_x : sum_xp;
      const double delta = first ? delta_x : delta_xp;
      double u = rng.uniform() * sum;
      std::size_t pick = end - 1;
      for (std::size_t i = begin; i < end; ++i) {
        u -= flow[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
      flow[pick] += delta;
      sum += delta;
      all += delta;
      if (through[pick]) hit += delta;
    }
    out.fractions[trial] = all > 0.0 ? hit / all : 0.0;
  });
  return out;
}

double first_step_hit_probability(const SettingA& setting) {
  TabularTrajectoryFlow table(setting.env, {setting.x}, 1.0);
  return table.state_flow(setting.s_star) / table.terminal_flow(setting.x);
}

PascalCheck pascal_row_bound_check(int n_max) {
  if (n_max < 1) throw std::invalid_argument("pascal_row_bound_check: n_max must be at least 1");
  PascalCheck out;
  out.holds = true;
  for (int n = 1; n <= n_max; ++n) {
    const auto top = static_cast<long double>(binomial(n, n / 2));
    const long double bound = std::numbers::e_v<long double> * std::ldexp(1.0L, n) /
                              (std::numbers::pi_v<long double> * std::sqrt(static_cast<long double>(n)));
    const auto ratio = static_cast<double>(top / bound);
    if (ratio > out.worst_ratio) {
      out.worst_ratio = ratio;
      out.worst_n = n;
    }
    if (top > bound) out.holds = false;
  }
  return out;
}

bool induced_policies_uniform(const Env& env, const std::vector<double>& flows, double tolerance) {
  TabularTrajectoryFlow table(env, env.enumerate_terminals(kDefaultEnumerationBudget), 1.0);
  if (flows.size() != table.flows().size()) throw std::invalid_argument("one flow per trajectory expected");
  table.flows() = flows;
  auto uniform = [&](const std::vector<double>& p) {
    for (double v : p) {
      if (std::abs(v - 1.0 / static_cast<double>(p.size())) > tolerance) return false;
    }
    return true;
  };
  for (int l = 0; l <= env.horizon(); ++l) {
    for (const auto& s : env.states_at_level(l)) {
      if (l < env.horizon() && !uniform(table.induced_forward(s))) return false;
      if (l > 0 && !uniform(table.induced_backward(s))) return false;
    }
  }
  return true;
}

UniformFlowCheck uniform_flow_equivalence_check(int n, int alphabet_size) {
  const Env env = Env::string_pa(alphabet_size, n);
  UniformFlowCheck out;
  TabularTrajectoryFlow table(env, env.enumerate_terminals(kDefaultEnumerationBudget), 1.0);
  out.flows_to_policies = induced_policies_uniform(env, table.flows());

  const auto pf = PolicyHead::uniform(env, Direction::forward);
  const auto pb = PolicyHead::uniform(env, Direction::backward);
  const double first_f = traj_log_pf(pf, table.trajectories().front());
  const double first_b = traj_log_pb(pb, table.trajectories().front());
  out.policies_to_flows = true;
  for (const auto& tau : table.trajectories()) {
    if (std::abs(traj_log_pf(pf, tau) - first_f) > 1e-12 || std::abs(traj_log_pb(pb, tau) - first_b) > 1e-12) {
      out.policies_to_flows = false;
    }
  }
  return out;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

template <class Fn>
TheoryCheck timed(const std::string& name, Fn&& fn) {
  TheoryCheck c;
  c.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fn(c);
  } catch (const std::exception& e) {
    c.passed = false;
    c.detail = e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

}  // namespace

std::vector<TheoryCheck> run_theory_checks(const TheoryOptions& options) {
  std::vector<TheoryCheck> out;

  out.push_back(timed("trajectory_counts", [&](TheoryCheck& c) {
    std::size_t cases = 0;
    c.passed = true;
    for (int n = 1; n <= options.n_max_count; ++n) {
      if (count_trajectories(n) != count_trajectories_dfs(n)) {
        c.passed = false;
        c.detail = "2^(n-1) mismatch at n=" + std::to_string(n);
        return;
      }
      for (int k = 1; k <= n; ++k) {
        for (int a = 0; a <= n - k; ++a, ++cases) {
          if (count_through(n, k, a) != count_through_dfs(n, k, a)) {
            c.passed = false;
            c.detail = "through-count mismatch at n=" + std::to_string(n) + " k=" + std::to_string(k) +
                       " a=" + std::to_string(a);
            return;
          }
        }
      }
    }
    c.detail = std::to_string(cases) + " (n,k,a) cases match enumeration";
  }));

  out.push_back(timed("maxent_credit_ratio", [&](TheoryCheck& c) {
    if (options.violate) {
      // x and x' share both "ab" and "cd".
      SettingA bad = setting_from_strings("abcd", "cdab", 4);
      maxent_flows(bad);
      c.passed = true;
      return;
    }
    c.passed = true;
    std::ostringstream detail;
    for (auto [n, k] : {std::pair{3, 2}, std::pair{6, 3}, std::pair{8, 4}}) {
      const auto res = maxent_flow_ratio(n, k);
      const double want = 2.0 / (n - k);
      detail << "(" << n << "," << k << ") ratio " << fmt(res.ratio) << "; ";
      if (std::abs(res.ratio - want) > 1e-9) c.passed = false;
      for (const auto& p : res.placements) {
        if (std::abs(p.level_k_total - 2.0) > 1e-9) c.passed = false;
      }
    }
    const auto hand = maxent_flows(setting_from_strings("aab", "baa", 2));
    detail << "aab/baa F(aa)=" << fmt(hand.f_star) << " F(ab)=" << fmt(hand.level_k.at("ab"));
    if (std::abs(hand.f_star - 1.0) > 1e-9 || std::abs(hand.level_k.at("ab") - 0.5) > 1e-9) c.passed = false;
    c.detail = detail.str();
  }));

  out.push_back(timed("substructure_optimum", [&](TheoryCheck& c) {
    c.passed = true;
    std::size_t settings = 0;
    for (auto [n, k] : {std::pair{3, 2}, std::pair{6, 3}, std::pair{8, 4}}) {
      for (int a = 0; a <= n - k; ++a) {
        for (int ap = 0; ap <= n - k; ++ap, ++settings) {
          const auto res = substructure_optimum_check(make_setting_a(n, k, a, ap));
          if (!res.holds) {
            c.passed = false;
            c.detail = "fails at n=" + std::to_string(n) + " k=" + std::to_string(k) + " a=" + std::to_string(a) +
                       " a'=" + std::to_string(ap) + ": F(s*)=" + fmt(res.flows.f_star);
            return;
          }
        }
      }
    }
    c.detail = std::to_string(settings) + " settings with F(s*) = R + R'";
  }));

  out.push_back(timed("polya_bound", [&](TheoryCheck& c) {
    const int n = 8;
    const int k = 4;
    c.passed = true;
    double worst = 1.0;
    std::string where;
    for (int a = 0; a <= n - k; ++a) {
      for (int ap = 0; ap <= n - k; ++ap) {
        PolyaConfig cfg;
        cfg.steps = options.polya_steps;
        cfg.trials = options.polya_trials;
        cfg.seed = options.seed + static_cast<std::uint64_t>(a * 16 + ap);
        const auto res = tabular_tb_simulate(make_setting_a(n, k, a, ap), cfg);
        const double t = static_cast<double>(cfg.trials);
        for (double psi : {0.2, 0.4, 0.6, 0.8}) {
          const double p = static_cast<double>(std::count_if(res.fractions.begin(), res.fractions.end(),
                                                             [&](double f) { return f > psi + 1e-12; })) / t;
          const double b = polya_exceedance_bound(n, k, cfg.steps, cfg.epsilon_init, res.delta, psi);
          const double se = std::sqrt(std::max(p * (1.0 - p), b * (1.0 - b)) / t);
          const double margin = b + 3.0 * se - p;
          if (margin < worst) {
            worst = margin;
            where = "a=" + std::to_string(a) + " a'=" + std::to_string(ap) + " psi=" + fmt(psi) + " p=" + fmt(p) +
                    " bound=" + fmt(b);
          }
          if (margin < 0.0) c.passed = false;
        }
      }
    }
    c.detail = "tightest: " + where;
  }));

  out.push_back(timed("pascal_row_bound", [&](TheoryCheck& c) {
    const auto res = pascal_row_bound_check(options.pascal_n_max);
    c.passed = res.holds;
    c.detail = "max C(n,a)/bound = " + fmt(res.worst_ratio) + " at n=" + std::to_string(res.worst_n);
  }));

  out.push_back(timed("uniform_flow_equivalence", [&](TheoryCheck& c) {
    const auto res = uniform_flow_equivalence_check(3, 2);
    c.passed = res.holds();
    c.detail = std::string("flows=>policies ") + (res.flows_to_policies ? "ok" : "FAIL") + ", policies=>flows " +
               (res.policies_to_flows ? "ok" : "FAIL");
  }));

  return out;
}

}  // namespace flowlab
