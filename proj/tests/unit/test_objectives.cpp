#include <doctest.h>

#include <cmath>
#include <map>

#include "../oracles.hpp"
#include "flowlab/objectives.hpp"
#include "flowlab/theory.hpp"

using namespace flowlab;

namespace {

std::vector<Observation> observations(const Env& env, std::vector<std::pair<std::string, double>> items) {
  std::vector<Observation> X;
  for (auto& [s, r] : items) {
    Observation o;
    o.x = env.parse(s);
    o.id = env.canonical_id(o.x);
    o.reward = r;
    X.push_back(o);
  }
  return X;
}

// Probability mass per distinct child state.
std::map<std::string, double> by_child(const Env& env, const State& s, const std::vector<double>& p) {
  std::map<std::string, double> out;
  const auto edges = env.children(s);
  for (std::size_t j = 0; j < edges.size(); ++j) out[env.to_string(edges[j].to)] += p[j];
  return out;
}

}  // namespace

TEST_SUITE("objectives") {

TEST_CASE("trajectory balance on a forced path") {
  const Env env = Env::string_ar(1, 3);
  const auto pf = PolicyHead::uniform(env, Direction::forward);
  const auto pb = PolicyHead::uniform(env, Direction::backward);
  Rng rng(0);
  const auto tau = sample_forward_trajectory(pf, 0.0, rng);
  CHECK(tb_loss(std::log(2.0), pf, pb, tau, 2.0).loss == doctest::Approx(0.0));
  CHECK(tb_loss(std::log(2.0) + 1.0, pf, pb, tau, 2.0).loss == doctest::Approx(1.0));
}

TEST_CASE("trajectory balance with uniform heads on string_pa n=2") {
  const Env env = Env::string_pa(2, 2);
  const auto pf = PolicyHead::uniform(env, Direction::forward);
  const auto pb = PolicyHead::uniform(env, Direction::backward);
  Rng rng(1);
  const auto tau = sample_forward_trajectory(pf, 0.0, rng);
  const auto l = tb_loss(0.0, pf, pb, tau, 1.0);
  CHECK(l.residual == doctest::Approx(-std::log(4.0)));
  CHECK(l.loss == doctest::Approx(std::log(4.0) * std::log(4.0)));
}

TEST_CASE("maximum-entropy and trajectory balance agree when each terminal has one trajectory") {
  const Env env = Env::string_ar(3, 4);
  Rng rng(2);
  const auto pf = PolicyHead::learned(env, Parametrization::sa, Direction::forward, {16}, rng);
  const auto learned_pb = PolicyHead::learned(env, Parametrization::sa, Direction::backward, {16}, rng);
  const auto uniform_pb = PolicyHead::uniform(env, Direction::backward);
  for (int i = 0; i < 20; ++i) {
    const auto tau = sample_forward_trajectory(pf, 0.2, rng);
    const double r = 0.5 + rng.uniform();
    CHECK(tb_loss(1.3, pf, learned_pb, tau, r).loss == tb_loss(1.3, pf, uniform_pb, tau, r).loss);
  }
}

TEST_CASE("substructure score") {
  const Env env = Env::string_pa(2, 3);
  const auto X = observations(env, {{"aab", 1.0}, {"baa", 2.0}});
  const State target = env.parse("aab");
  CHECK(substructure_score(env, env.parse("bb"), target, X) == 0.0);
  CHECK(substructure_score(env, env.parse("aa"), target, X) == 2.0);
  CHECK(substructure_score(env, env.parse("ab"), target, X) == 0.0);
}

TEST_CASE("guide transitions") {
  const Env env = Env::string_pa(2, 3);
  SUBCASE("normalized scores: all mass on the two edges into 'aa'") {
    const auto X = observations(env, {{"aab", 1.0}, {"baa", 1.0}});
    const State a = env.parse("a");
    const auto p = guide_transition(env, a, env.parse("aab"), X);
    const auto edges = env.children(a);
    for (std::size_t j = 0; j < edges.size(); ++j) {
      CHECK(p[j] == (env.to_string(edges[j].to) == "aa" ? 0.5 : 0.0));
    }
  }
  SUBCASE("proportional to scores") {
    const auto X = observations(env, {{"aab", 1.0}, {"baa", 2.0}, {"bab", 6.0}});
    // From "": child "a" scores mean(2, 6) = 4, child "b" scores mean(2, 6) = 4.
    auto p = by_child(env, env.initial(), guide_transition(env, env.initial(), env.parse("aab"), X));
    CHECK(p["a"] == doctest::Approx(0.5));
    CHECK(p["b"] == doctest::Approx(0.5));
    // From "a": two edges into "aa" scoring 2 each, one into "ab" scoring 6.
    auto q = by_child(env, env.parse("a"), guide_transition(env, env.parse("a"), env.parse("aab"), X));
    CHECK(q["aa"] == doctest::Approx(0.4));
    CHECK(q["ab"] == doctest::Approx(0.6));
    CHECK(q["ba"] == 0.0);
  }
  SUBCASE("all scores zero: uniform over contained children") {
    const auto X = observations(env, {{"aba", 1.0}});
    const State b = env.parse("b");
    const auto p = guide_transition(env, b, env.parse("aba"), X);
    const auto edges = env.children(b);
    REQUIRE(edges.size() == 4);
    for (std::size_t j = 0; j < edges.size(); ++j) {
      const auto to = env.to_string(edges[j].to);
      CHECK(p[j] == (to == "ab" || to == "ba" ? 0.5 : 0.0));
    }
  }
}

TEST_CASE("guide rows are distributions and samples end at the target") {
  const Env env = Env::string_pa(3, 5);
  Rng rng(8);
  std::vector<std::pair<std::string, double>> items;
  const auto terms = env.enumerate_terminals(1000);
  for (int i = 0; i < 30; ++i) items.push_back({env.to_string(terms[rng.index(terms.size())]), 0.1 + rng.uniform()});
  const auto X = observations(env, items);
  for (int t = 0; t < 5; ++t) {
    const State target = X[static_cast<std::size_t>(t)].x;
    GuideDistribution guide(env, X, target);
    for (int l = 0; l < env.horizon(); ++l) {
      for (const auto& s : env.states_at_level(l)) {
        if (!env.contains(s, target)) continue;
        const auto p = guide.transition(s);
        double total = 0.0;
        for (double v : p) total += v;
        CHECK(std::abs(total - 1.0) <= 1e-9);
      }
    }
    for (int i = 0; i < 50; ++i) {
      const auto sample = guide.sample(rng);
      CHECK(sample.trajectory.terminal == target);
      CHECK(sample.log_prob == doctest::Approx(guide.log_prob(sample.trajectory)).epsilon(1e-12));
    }
  }
}

TEST_CASE("guide on an autoregressive target is forced") {
  const Env env = Env::string_ar(3, 4);
  const auto X = observations(env, {{"abca", 1.0}, {"bbbb", 3.0}});
  Rng rng(0);
  const auto sample = sample_guide_trajectory(env, env.parse("abca"), X, rng);
  CHECK(sample.log_prob == 0.0);
  CHECK(env.to_string(sample.trajectory.terminal) == "abca");
}

TEST_CASE("guide sampling is deterministic under a seed") {
  const Env env = Env::string_pa(2, 5);
  const auto X = observations(env, {{"aabab", 1.0}, {"babaa", 2.0}, {"abbba", 0.5}});
  Rng a(4), b(4);
  for (int i = 0; i < 20; ++i) {
    const auto s1 = sample_guide_trajectory(env, env.parse("aabab"), X, a);
    const auto s2 = sample_guide_trajectory(env, env.parse("aabab"), X, b);
    CHECK(s1.log_prob == s2.log_prob);
    REQUIRE(s1.trajectory.steps.size() == s2.trajectory.steps.size());
    for (std::size_t k = 0; k < s1.trajectory.steps.size(); ++k) {
      CHECK(s1.trajectory.steps[k].to == s2.trajectory.steps[k].to);
      CHECK(s1.trajectory.steps[k].action == s2.trajectory.steps[k].action);
    }
  }
}

TEST_CASE("'aab'/'baa': the guide splits at the root because 'b' is shared") {
  const Env env = Env::string_pa(2, 3);
  const auto X = observations(env, {{"aab", 1.0}, {"baa", 1.0}});
  auto root = by_child(env, env.initial(), guide_transition(env, env.initial(), env.parse("aab"), X));
  CHECK(root["a"] == doctest::Approx(0.5));
  CHECK(root["b"] == doctest::Approx(0.5));

  const auto setting = setting_from_strings("aab", "baa", 2);
  const auto flows = substructure_guide_flows(setting);
  CHECK(flows.f_star == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(flows.level_k.at("ab") == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(flows.level_k.at("ba") == doctest::Approx(0.5).epsilon(1e-12));
  try {
    substructure_optimum_check(setting);
    FAIL("expected the setting to be refused");
  } catch (const SettingError& e) {
    CHECK(e.substring() == "b");
  }
}

TEST_CASE("backward guided loss") {
  const Env env = Env::string_pa(2, 3);
  const auto pb = PolicyHead::uniform(env, Direction::backward);
  Rng rng(0);
  const auto tau = sample_forward_trajectory(PolicyHead::uniform(env, Direction::forward), 0.0, rng);
  const double lpb = traj_log_pb(pb, tau);
  CHECK(back_gtb_loss(pb, tau, lpb).loss == 0.0);
  CHECK(back_gtb_loss(pb, tau, lpb - 1.0).loss == doctest::Approx(1.0));
  // A guide concentrated on one of the four trajectories to x.
  CHECK(back_gtb_loss(pb, tau, 0.0).loss == doctest::Approx(std::log(4.0) * std::log(4.0)));

  const Env ar = Env::string_ar(2, 3);
  const auto t2 = sample_forward_trajectory(PolicyHead::uniform(ar, Direction::forward), 0.0, rng);
  CHECK(back_gtb_loss(PolicyHead::uniform(ar, Direction::backward), t2, 0.0).loss == 0.0);
}

TEST_CASE("forward guided loss targets") {
  const Env env = Env::string_pa(2, 4);
  Rng rng(5);
  const auto pf = PolicyHead::learned(env, Parametrization::sa, Direction::forward, {8}, rng);
  const auto pb = PolicyHead::learned(env, Parametrization::sa, Direction::backward, {8}, rng);
  const auto tau = sample_forward_trajectory(pf, 0.0, rng);
  const double r = 1.7, g = -2.0, lz = 0.4;
  const double lpb = traj_log_pb(pb, tau);

  const auto a1 = forward_gtb_loss(lz, pf, pb, tau, r, g, 1.0);
  CHECK(a1.psi_b == doctest::Approx(std::log(r) + g));
  CHECK(a1.psi_f - a1.psi_b == doctest::Approx(lz + traj_log_pf(pf, tau) - std::log(r) - g));

  const auto a0 = forward_gtb_loss(lz, pf, pb, tau, r, g, 0.0);
  CHECK(a0.psi_f - a0.psi_b == doctest::Approx(tb_loss(lz, pf, pb, tau, r).residual).epsilon(1e-12));

  const auto half = forward_gtb_loss(lz, pf, pb, tau, r, g, 0.5);
  CHECK(half.psi_b == doctest::Approx(std::log(r) + 0.5 * g + 0.5 * lpb));
  CHECK_THROWS(forward_gtb_loss(lz, pf, pb, tau, r, g, 1.5));
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(21);
  for (const Env& env : {Env::string_pa(2, 4), Env::bag(3, 4)}) {
    for (auto kind : {Parametrization::sa, Parametrization::ssr}) {
      auto pf = PolicyHead::learned(env, kind, Direction::forward, {16, 16}, rng);
      auto pb = PolicyHead::learned(env, kind, Direction::backward, {16, 16}, rng);
      const auto tau = sample_forward_trajectory(pf, 0.3, rng);
      const double r = 2.3, g = -1.1;
      double lz = 0.7;

      const auto tb = tb_loss(lz, pf, pb, tau, r);
      auto tb_pf = oracle::central_difference(pf.net().parameters(), [&] { return tb_loss(lz, pf, pb, tau, r).loss; });
      auto tb_pb = oracle::central_difference(pb.net().parameters(), [&] { return tb_loss(lz, pf, pb, tau, r).loss; });
      Eigen::VectorXd z(1);
      z << lz;
      auto tb_z = oracle::central_difference(z, [&] { return tb_loss(z[0], pf, pb, tau, r).loss; });
      CHECK(oracle::max_relative_error(tb.grad_pf, tb_pf) <= 1e-4);
      CHECK(oracle::max_relative_error(tb.grad_pb, tb_pb) <= 1e-4);
      CHECK(std::abs(tb.grad_log_z - tb_z[0]) <= 1e-4 * std::abs(tb_z[0]));

      const auto back = back_gtb_loss(pb, tau, g);
      auto back_pb = oracle::central_difference(pb.net().parameters(), [&] { return back_gtb_loss(pb, tau, g).loss; });
      CHECK(oracle::max_relative_error(back.grad_pb, back_pb) <= 1e-4);

      for (double alpha : {1.0, 0.4}) {
        const auto fwd = forward_gtb_loss(lz, pf, pb, tau, r, g, alpha);
        auto fwd_pf = oracle::central_difference(pf.net().parameters(),
                                                 [&] { return forward_gtb_loss(lz, pf, pb, tau, r, g, alpha).loss; });
        CHECK(oracle::max_relative_error(fwd.grad_pf, fwd_pf) <= 1e-4);
        auto fwd_z = oracle::central_difference(z, [&] { return forward_gtb_loss(z[0], pf, pb, tau, r, g, alpha).loss; });
        CHECK(std::abs(fwd.grad_log_z - fwd_z[0]) <= 1e-4 * std::abs(fwd_z[0]));
      }
    }
  }
}

TEST_CASE("flow entropy") {
  const Env env = Env::string_pa(2, 2);
  const auto e = flow_entropy(PolicyHead::uniform(env, Direction::forward));
  CHECK(e.exact);
  CHECK(e.value == doctest::Approx(std::log(2.0) + std::log(4.0)));

  Mlp net({env.encoding_size(), env.forward_slot_count()});
  const auto slot = static_cast<Eigen::Index>(env.encoding_size()) * env.forward_slot_count();
  for (int k = 0; k < env.forward_slot_count(); ++k) net.parameters()[slot + k] = k == 0 ? 100.0 : -100.0;
  const auto det = PolicyHead::from_net(env, Parametrization::sa, Direction::forward, net);
  CHECK(flow_entropy(det).value < 1e-30);

  const Env env4 = Env::string_pa(2, 4);
  Rng rng(6);
  const auto head = PolicyHead::learned(env4, Parametrization::sa, Direction::forward, {16}, rng);
  const auto exact = flow_entropy(head);
  const auto mc = flow_entropy_monte_carlo(head, 20000, rng);
  CHECK(!mc.exact);
  CHECK(std::abs(mc.value - exact.value) <= 3 * mc.standard_error);
  CHECK(flow_entropy(head, 10, 20000, 1).exact == false);
}

}  // TEST_SUITE
