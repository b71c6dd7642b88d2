#include "flowlab/env.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>
#include <unordered_set>

#include "flowlab/error.hpp"

namespace flowlab {

std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::bag: return "bag";
    case EnvKind::string_pa: return "string_pa";
    case EnvKind::string_ar: return "string_ar";
  }
  return "?";
}

EnvKind parse_env_kind(std::string_view name) {
  if (name == "bag") return EnvKind::bag;
  if (name == "string_pa") return EnvKind::string_pa;
  if (name == "string_ar") return EnvKind::string_ar;
  throw ConfigError("unknown environment kind '" + std::string(name) + "'");
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (int i = 0; i < k; ++i) {
    c = c * static_cast<unsigned>(n - i) / static_cast<unsigned>(i + 1);
    if (c > UINT64_MAX) throw std::overflow_error("binomial: result exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(c);
}

namespace {

std::uint64_t checked_pow(std::uint64_t base, int exp) {
  unsigned __int128 r = 1;
  for (int i = 0; i < exp; ++i) {
    r *= base;
    if (r > UINT64_MAX) throw std::overflow_error("state count exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(r);
}

void compositions(int remaining, int slot, std::vector<std::uint8_t>& counts,
                  std::vector<State>& out) {
  const int last = static_cast<int>(counts.size()) - 1;
  if (slot == last) {
    counts[slot] = static_cast<std::uint8_t>(remaining);
    out.push_back(State{counts});
    return;
  }
  for (int c = remaining; c >= 0; --c) {
    counts[slot] = static_cast<std::uint8_t>(c);
    compositions(remaining - c, slot + 1, counts, out);
  }
  counts[slot] = 0;
}

}  // namespace

Env::Env(EnvKind kind, int alphabet_size, int horizon)
    : kind_(kind), alphabet_(alphabet_size), horizon_(horizon) {
  if (alphabet_size < 1 || alphabet_size > 26) {
    throw ConfigError("alphabet_size must be in [1, 26], got " + std::to_string(alphabet_size));
  }
  if (horizon < 1 || horizon > 64) {
    throw ConfigError("sequence length / capacity must be in [1, 64], got " +
                      std::to_string(horizon));
  }
  if (kind == EnvKind::bag && horizon > 255) throw ConfigError("bag capacity too large");
}

Env Env::bag(int alphabet_size, int capacity) { return Env(EnvKind::bag, alphabet_size, capacity); }
Env Env::string_pa(int alphabet_size, int length) {
  return Env(EnvKind::string_pa, alphabet_size, length);
}
Env Env::string_ar(int alphabet_size, int length) {
  return Env(EnvKind::string_ar, alphabet_size, length);
}
Env Env::make(EnvKind kind, int alphabet_size, int horizon) {
  return Env(kind, alphabet_size, horizon);
}

State Env::initial() const {
  if (kind_ == EnvKind::bag) return State{std::vector<std::uint8_t>(alphabet_, 0)};
  return State{};
}

int Env::level(const State& s) const {
  if (kind_ != EnvKind::bag) return static_cast<int>(s.data.size());
  int total = 0;
  for (auto c : s.data) total += c;
  return total;
}

void Env::validate(const State& s) const {
  if (kind_ == EnvKind::bag) {
    if (static_cast<int>(s.data.size()) != alphabet_) {
      throw std::invalid_argument("bag state has wrong number of count slots");
    }
  } else {
    for (auto c : s.data) {
      if (c >= alphabet_) throw std::invalid_argument("string state has out-of-alphabet symbol");
    }
  }
  if (level(s) > horizon_) throw std::invalid_argument("state exceeds environment horizon");
}

State Env::apply(const State& s, Action a) const {
  if (a.symbol < 0 || a.symbol >= alphabet_) throw std::invalid_argument("action symbol out of range");
  State next = s;
  const auto sym = static_cast<std::uint8_t>(a.symbol);
  if (kind_ == EnvKind::bag) {
    next.data[sym] += 1;
  } else if (a.kind == ActionKind::prepend) {
    next.data.insert(next.data.begin(), sym);
  } else {
    next.data.push_back(sym);
  }
  return next;
}

std::vector<Edge> Env::children(const State& s) const {
  std::vector<Edge> edges;
  const int lvl = level(s);
  if (lvl >= horizon_) return edges;
  auto push = [&](ActionKind kind, int c) {
    Action a{kind, c};
    edges.push_back(Edge{s, a, apply(s, a)});
  };
  switch (kind_) {
    case EnvKind::bag:
      edges.reserve(alphabet_);
      for (int c = 0; c < alphabet_; ++c) push(ActionKind::add, c);
      break;
    case EnvKind::string_ar:
      edges.reserve(alphabet_);
      for (int c = 0; c < alphabet_; ++c) push(ActionKind::append, c);
      break;
    case EnvKind::string_pa:
      if (lvl == 0) {
        edges.reserve(alphabet_);
        for (int c = 0; c < alphabet_; ++c) push(ActionKind::add, c);
      } else {
        edges.reserve(2 * alphabet_);
        for (int c = 0; c < alphabet_; ++c) push(ActionKind::prepend, c);
        for (int c = 0; c < alphabet_; ++c) push(ActionKind::append, c);
      }
      break;
  }
  return edges;
}

std::vector<Edge> Env::parents(const State& s) const {
  std::vector<Edge> edges;
  const int lvl = level(s);
  if (lvl == 0) return edges;
  switch (kind_) {
    case EnvKind::bag:
      for (int c = 0; c < alphabet_; ++c) {
        if (s.data[c] == 0) continue;
        State from = s;
        from.data[c] -= 1;
        edges.push_back(Edge{std::move(from), Action{ActionKind::add, c}, s});
      }
      break;
    case EnvKind::string_ar: {
      State from{std::vector<std::uint8_t>(s.data.begin(), s.data.end() - 1)};
      edges.push_back(Edge{std::move(from), Action{ActionKind::append, s.data.back()}, s});
      break;
    }
    case EnvKind::string_pa:
      if (lvl == 1) {
        edges.push_back(Edge{State{}, Action{ActionKind::add, s.data[0]}, s});
      } else {
        State tail{std::vector<std::uint8_t>(s.data.begin() + 1, s.data.end())};
        State head{std::vector<std::uint8_t>(s.data.begin(), s.data.end() - 1)};
        edges.push_back(Edge{std::move(tail), Action{ActionKind::prepend, s.data.front()}, s});
        edges.push_back(Edge{std::move(head), Action{ActionKind::append, s.data.back()}, s});
      }
      break;
  }
  return edges;
}

bool Env::contains(const State& s, const State& x) const {
  switch (kind_) {
    case EnvKind::bag:
      for (int c = 0; c < alphabet_; ++c) {
        if (s.data[c] > x.data[c]) return false;
      }
      return true;
    case EnvKind::string_ar:
      return s.data.size() <= x.data.size() &&
             std::equal(s.data.begin(), s.data.end(), x.data.begin());
    case EnvKind::string_pa:
      if (s.data.empty()) return true;
      return std::search(x.data.begin(), x.data.end(), s.data.begin(), s.data.end()) !=
             x.data.end();
  }
  return false;
}

std::uint64_t Env::canonical_id(const State& s) const {
  std::uint64_t id = 0;
  if (kind_ == EnvKind::bag) {
    const std::uint64_t radix = static_cast<std::uint64_t>(horizon_) + 1;
    for (int c = alphabet_ - 1; c >= 0; --c) id = id * radix + s.data[c];
    return id;
  }
  // Strings of shorter length come first, then lexicographic rank.
  std::uint64_t offset = 0;
  std::uint64_t block = 1;
  for (std::size_t len = 0; len < s.data.size(); ++len) {
    offset += block;
    block *= static_cast<std::uint64_t>(alphabet_);
  }
  for (auto c : s.data) id = id * static_cast<std::uint64_t>(alphabet_) + c;
  return offset + id;
}

std::uint64_t Env::state_count_at_level(int lvl) const {
  if (lvl < 0 || lvl > horizon_) return 0;
  if (kind_ == EnvKind::bag) return binomial(lvl + alphabet_ - 1, alphabet_ - 1);
  return checked_pow(static_cast<std::uint64_t>(alphabet_), lvl);
}

std::uint64_t Env::state_count() const {
  std::uint64_t total = 0;
  for (int l = 0; l <= horizon_; ++l) total += state_count_at_level(l);
  return total;
}

std::uint64_t Env::terminal_count() const { return state_count_at_level(horizon_); }

std::vector<State> Env::states_at_level(int lvl) const {
  std::vector<State> out;
  if (lvl < 0 || lvl > horizon_) return out;
  out.reserve(static_cast<std::size_t>(state_count_at_level(lvl)));
  if (kind_ == EnvKind::bag) {
    std::vector<std::uint8_t> counts(alphabet_, 0);
    compositions(lvl, 0, counts, out);
    return out;
  }
  const std::uint64_t n = state_count_at_level(lvl);
  for (std::uint64_t i = 0; i < n; ++i) {
    State s{std::vector<std::uint8_t>(lvl)};
    std::uint64_t v = i;
    for (int p = lvl - 1; p >= 0; --p) {
      s.data[p] = static_cast<std::uint8_t>(v % alphabet_);
      v /= alphabet_;
    }
    out.push_back(std::move(s));
  }
  return out;
}

void Env::for_each_terminal(std::uint64_t budget,
                            const std::function<void(const State&)>& fn) const {
  const std::uint64_t count = terminal_count();
  if (count > budget) throw BudgetExceeded("terminal enumeration", count, budget);
  for (const auto& s : states_at_level(horizon_)) fn(s);
}

std::vector<State> Env::enumerate_terminals(std::uint64_t budget) const {
  const std::uint64_t count = terminal_count();
  if (count > budget) throw BudgetExceeded("terminal enumeration", count, budget);
  return states_at_level(horizon_);
}

int Env::encoding_size() const {
  if (kind_ == EnvKind::bag) return alphabet_ + 1;
  return horizon_ * (alphabet_ + 1) + 1;
}

void Env::encode_into(const State& s, Eigen::Ref<Eigen::VectorXd> out) const {
  out.setZero();
  const double h = static_cast<double>(horizon_);
  if (kind_ == EnvKind::bag) {
    int total = 0;
    for (int c = 0; c < alphabet_; ++c) {
      out[c] = s.data[c] / h;
      total += s.data[c];
    }
    out[alphabet_] = total / h;
    return;
  }
  const int classes = alphabet_ + 1;
  const int len = static_cast<int>(s.data.size());
  for (int p = 0; p < horizon_; ++p) {
    const int cls = p < len ? s.data[p] + 1 : 0;
    out[p * classes + cls] = 1.0;
  }
  out[horizon_ * classes] = len / h;
}

Eigen::VectorXd Env::encode(const State& s) const {
  Eigen::VectorXd v(encoding_size());
  encode_into(s, v);
  return v;
}

int Env::forward_slot_count() const {
  return kind_ == EnvKind::string_pa ? 2 * alphabet_ : alphabet_;
}

int Env::forward_slot(Action a) const {
  if (kind_ == EnvKind::string_pa && a.kind == ActionKind::append) return alphabet_ + a.symbol;
  return a.symbol;
}

int Env::backward_slot_count() const {
  switch (kind_) {
    case EnvKind::bag: return alphabet_;
    case EnvKind::string_ar: return 1;
    case EnvKind::string_pa: return 2;
  }
  return 1;
}

int Env::backward_slot(Action a) const {
  switch (kind_) {
    case EnvKind::bag: return a.symbol;
    case EnvKind::string_ar: return 0;
    case EnvKind::string_pa: return a.kind == ActionKind::append ? 1 : 0;
  }
  return 0;
}

std::string Env::to_string(const State& s) const {
  std::string out;
  if (kind_ == EnvKind::bag) {
    for (int c = 0; c < alphabet_; ++c) out.append(s.data[c], static_cast<char>('a' + c));
    return out;
  }
  for (auto c : s.data) out.push_back(static_cast<char>('a' + c));
  return out;
}

State Env::parse(std::string_view text) const {
  State s = initial();
  for (char ch : text) {
    const int c = ch - 'a';
    if (c < 0 || c >= alphabet_) {
      throw std::invalid_argument("symbol '" + std::string(1, ch) + "' outside alphabet of size " +
                                  std::to_string(alphabet_));
    }
    if (kind_ == EnvKind::bag) {
      s.data[c] += 1;
    } else {
      s.data.push_back(static_cast<std::uint8_t>(c));
    }
  }
  if (level(s) > horizon_) throw std::invalid_argument("'" + std::string(text) + "' is too long");
  return s;
}

bool reachable_bfs(const Env& env, const State& s, const State& x) {
  const int target_level = env.level(x);
  if (env.level(s) > target_level) return false;
  std::deque<State> frontier{s};
  std::unordered_set<std::uint64_t> seen{env.canonical_id(s)};
  while (!frontier.empty()) {
    State cur = std::move(frontier.front());
    frontier.pop_front();
    if (cur == x) return true;
    if (env.level(cur) >= target_level) continue;
    for (auto& e : env.children(cur)) {
      if (seen.insert(env.canonical_id(e.to)).second) frontier.push_back(std::move(e.to));
    }
  }
  return false;
}

}  // namespace flowlab
