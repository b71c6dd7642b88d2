#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "../oracles.hpp"
#include "flowlab/env.hpp"
#include "flowlab/error.hpp"
#include "flowlab/policy.hpp"

using namespace flowlab;

namespace {

using EdgeKey = std::tuple<std::uint64_t, int, int, std::uint64_t>;

EdgeKey key(const Env& env, const Edge& e) {
  return {env.canonical_id(e.from), static_cast<int>(e.action.kind), e.action.symbol, env.canonical_id(e.to)};
}

std::multiset<std::string> targets(const Env& env, const std::vector<Edge>& edges) {
  std::multiset<std::string> out;
  for (const auto& e : edges) out.insert(env.to_string(e.to));
  return out;
}

std::vector<Env> small_envs() {
  std::vector<Env> out;
  for (int a = 1; a <= 3; ++a) {
    for (int n = 1; n <= 5; ++n) {
      out.push_back(Env::string_pa(a, n));
      out.push_back(Env::string_ar(a, n));
      out.push_back(Env::bag(a, n));
    }
  }
  return out;
}

std::uint64_t factorial(int n) {
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("prepend/append children of a single letter include two edges into the doubled letter") {
  const Env env = Env::string_pa(2, 3);
  const auto edges = env.children(env.parse("a"));
  REQUIRE(edges.size() == 4);
  CHECK(targets(env, edges) == std::multiset<std::string>{"aa", "aa", "ab", "ba"});
  int prepends = 0, appends = 0;
  for (const auto& e : edges) {
    prepends += e.action.kind == ActionKind::prepend;
    appends += e.action.kind == ActionKind::append;
  }
  CHECK(prepends == 2);
  CHECK(appends == 2);
}

TEST_CASE("children of the empty string are one add edge per symbol") {
  const Env env = Env::string_pa(2, 3);
  const auto edges = env.children(env.initial());
  REQUIRE(edges.size() == 2);
  CHECK(targets(env, edges) == std::multiset<std::string>{"a", "b"});
  for (const auto& e : edges) CHECK(e.action.kind == ActionKind::add);
}

TEST_CASE("bag children add one of each symbol") {
  const Env env = Env::bag(3, 2);
  const State s{{1, 0, 0}};
  const auto edges = env.children(s);
  REQUIRE(edges.size() == 3);
  for (int c = 0; c < 3; ++c) CHECK(edges[c].action == Action{ActionKind::add, c});
}

TEST_CASE("parents") {
  SUBCASE("string_pa 'aa' has two parent edges, both from 'a'") {
    const Env env = Env::string_pa(2, 3);
    const auto edges = env.parents(env.parse("aa"));
    REQUIRE(edges.size() == 2);
    for (const auto& e : edges) CHECK(env.to_string(e.from) == "a");
  }
  SUBCASE("string_ar 'ab' has one parent 'a'") {
    const Env env = Env::string_ar(2, 3);
    const auto edges = env.parents(env.parse("ab"));
    REQUIRE(edges.size() == 1);
    CHECK(env.to_string(edges[0].from) == "a");
  }
  SUBCASE("bag {2,1} has parents {1,1} and {2,0}") {
    const Env env = Env::bag(2, 3);
    const auto edges = env.parents(State{{2, 1}});
    REQUIRE(edges.size() == 2);
    std::set<std::vector<std::uint8_t>> from;
    for (const auto& e : edges) from.insert(e.from.data);
    CHECK(from == std::set<std::vector<std::uint8_t>>{{1, 1}, {2, 0}});
  }
}

TEST_CASE("terminal counts") {
  CHECK(Env::string_pa(2, 3).terminal_count() == 8);
  CHECK(Env::string_pa(2, 3).enumerate_terminals(100).size() == 8);
  CHECK(Env::bag(7, 13).terminal_count() == oracle::choose(19, 6));
  CHECK(Env::bag(7, 13).terminal_count() == 27132);
  CHECK(Env::string_ar(4, 8).terminal_count() == 65536);
  CHECK_THROWS_AS(Env::bag(7, 13).enumerate_terminals(1000), BudgetExceeded);
}

TEST_CASE("contains") {
  const Env pa = Env::string_pa(4, 4);
  const Env ar = Env::string_ar(4, 4);
  CHECK(pa.contains(pa.parse("ab"), pa.parse("cabd")));
  CHECK_FALSE(ar.contains(ar.parse("ab"), ar.parse("cabd")));
  const Env bag = Env::bag(2, 2);
  CHECK_FALSE(bag.contains(State{{1, 0}}, State{{0, 2}}));
}

TEST_CASE("encoding") {
  const Env env = Env::string_pa(2, 3);
  REQUIRE(env.encoding_size() == 10);
  Eigen::VectorXd e = env.encode(env.initial());
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(10);
  expected[0] = expected[3] = expected[6] = 1.0;
  CHECK(e == expected);

  e = env.encode(env.parse("ab"));
  expected.setZero();
  expected[0 * 3 + 1] = 1.0;
  expected[1 * 3 + 2] = 1.0;
  expected[2 * 3 + 0] = 1.0;
  expected[9] = 2.0 / 3.0;
  CHECK(e == expected);

  const Env bag = Env::bag(3, 4);
  Eigen::VectorXd b(4);
  b << 0.5, 0.0, 0.25, 0.75;
  CHECK(bag.encode(State{{2, 0, 1}}) == b);
}

TEST_CASE("parent/child duality with multiplicity on small environments") {
  for (const Env& env : small_envs()) {
    CAPTURE(std::string(to_string(env.kind())));
    CAPTURE(env.alphabet_size());
    CAPTURE(env.horizon());
    std::map<EdgeKey, int> down, up;
    for (int l = 0; l <= env.horizon(); ++l) {
      for (const auto& s : env.states_at_level(l)) {
        for (const auto& e : env.children(s)) ++down[key(env, e)];
        for (const auto& e : env.parents(s)) {
          CHECK(env.canonical_id(e.to) == env.canonical_id(s));
          ++up[key(env, e)];
        }
      }
    }
    CHECK(down == up);
  }
}

TEST_CASE("trajectory counts per terminal") {
  for (const Env& env : small_envs()) {
    for (const auto& x : env.enumerate_terminals(100000)) {
      const auto n = enumerate_trajectories(env, x).size();
      std::uint64_t expected = 1;
      if (env.kind() == EnvKind::string_pa) {
        expected = std::uint64_t{1} << (env.horizon() - 1);
      } else if (env.kind() == EnvKind::bag) {
        expected = factorial(env.horizon());
        for (auto c : x.data) expected /= factorial(c);
      }
      CHECK(n == expected);
    }
  }
}

TEST_CASE("contains agrees with reachability in the DAG") {
  for (const Env& env : {Env::string_pa(2, 4), Env::string_pa(3, 3), Env::string_ar(2, 4), Env::bag(3, 3)}) {
    std::vector<State> all;
    for (int l = 0; l <= env.horizon(); ++l) {
      const auto level = env.states_at_level(l);
      all.insert(all.end(), level.begin(), level.end());
    }
    for (const auto& s : all) {
      for (const auto& x : all) CHECK(env.contains(s, x) == reachable_bfs(env, s, x));
    }
  }
}

TEST_CASE("every environment admits a topological pass") {
  for (const Env& env : small_envs()) {
    const PolicyHead uniform = PolicyHead::uniform(env, Direction::forward);
    double terminal_mass = 0.0;
    forward_reach_dp(uniform, 1'000'000, [&](const State& s, double reach, const auto&, const auto&) {
      if (env.is_terminal(s)) terminal_mass += reach;
    });
    CHECK(terminal_mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("canonical ids are injective and strings round-trip") {
  for (const Env& env : {Env::string_pa(3, 4), Env::bag(4, 5), Env::string_ar(2, 5)}) {
    std::set<std::uint64_t> ids;
    std::size_t count = 0;
    for (int l = 0; l <= env.horizon(); ++l) {
      for (const auto& s : env.states_at_level(l)) {
        ids.insert(env.canonical_id(s));
        ++count;
        CHECK(env.parse(env.to_string(s)) == s);
      }
    }
    CHECK(ids.size() == count);
    CHECK(count == env.state_count());
  }
}

}  // TEST_SUITE
