#pragma once

// Enumerable generative DAG environments: bags (multisets), strings built by
// prepend/append, and strings built autoregressively.

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace flowlab {

enum class EnvKind { bag, string_pa, string_ar };

std::string_view to_string(EnvKind kind);
EnvKind parse_env_kind(std::string_view name);

// For strings: the symbol sequence. For bags: one count per alphabet symbol.
// A State is interpreted through the Env that produced it.
struct State {
  std::vector<std::uint8_t> data;

  bool operator==(const State&) const = default;
  auto operator<=>(const State&) const = default;
};

enum class ActionKind : std::uint8_t { add, prepend, append };

struct Action {
  ActionKind kind = ActionKind::add;
  int symbol = 0;

  bool operator==(const Action&) const = default;
};

// One action-labelled edge. The DAG is a multigraph: two edges with distinct
// actions may share `from` and `to`.
struct Edge {
  State from;
  Action action;
  State to;
};

struct Trajectory {
  std::vector<Edge> steps;
  State terminal;
};

class Env {
 public:
  static Env bag(int alphabet_size, int capacity);
  static Env string_pa(int alphabet_size, int length);
  static Env string_ar(int alphabet_size, int length);
  static Env make(EnvKind kind, int alphabet_size, int horizon);

  EnvKind kind() const { return kind_; }
  int alphabet_size() const { return alphabet_; }
  // Terminal string length, or bag capacity.
  int horizon() const { return horizon_; }
  bool is_string() const { return kind_ != EnvKind::bag; }

  State initial() const;
  // String length, or total bag count.
  int level(const State& s) const;
  bool is_terminal(const State& s) const { return level(s) == horizon_; }
  void validate(const State& s) const;

  State apply(const State& s, Action a) const;
  std::vector<Edge> children(const State& s) const;
  std::vector<Edge> parents(const State& s) const;

  // Substructure membership: substring (string_pa), prefix (string_ar),
  // componentwise <= (bag). Equivalent to reachability in the DAG.
  bool contains(const State& s, const State& x) const;

  // Injective key: dense rank for strings, mixed-radix counts for bags.
  std::uint64_t canonical_id(const State& s) const;

  std::vector<State> states_at_level(int level) const;
  std::uint64_t state_count_at_level(int level) const;
  std::uint64_t state_count() const;
  std::uint64_t terminal_count() const;

  // Each terminal exactly once, in a fixed deterministic order.
  // Throws BudgetExceeded when terminal_count() > budget.
  void for_each_terminal(std::uint64_t budget, const std::function<void(const State&)>& fn) const;
  std::vector<State> enumerate_terminals(std::uint64_t budget) const;

  // Fixed-width feature vector (see README for the layout).
  int encoding_size() const;
  Eigen::VectorXd encode(const State& s) const;
  void encode_into(const State& s, Eigen::Ref<Eigen::VectorXd> out) const;

  // Action-template slots used by state->action-logit policies.
  int forward_slot_count() const;
  int forward_slot(Action a) const;
  int backward_slot_count() const;
  int backward_slot(Action a) const;

  // Letters a, b, c, ... for strings; bags are printed as their sorted letters.
  std::string to_string(const State& s) const;
  State parse(std::string_view text) const;

  bool operator==(const Env&) const = default;

 private:
  Env(EnvKind kind, int alphabet_size, int horizon);

  EnvKind kind_ = EnvKind::string_pa;
  int alphabet_ = 2;
  int horizon_ = 1;
};

// Generic membership by breadth-first search over children().
bool reachable_bfs(const Env& env, const State& s, const State& x);

std::uint64_t binomial(int n, int k);

inline constexpr std::uint64_t kDefaultEnumerationBudget = 5'000'000;

}  // namespace flowlab
