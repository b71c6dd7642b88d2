#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowlab/env.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

struct Observation {
  State x;
  std::uint64_t id = 0;
  double reward = 0.0;
  int round_first_seen = 0;
};

struct PrtConfig {
  double top_fraction = 0.1;        // size of the high-reward partition, as a fraction of |X|
  double top_batch_fraction = 0.5;  // share of each replay batch drawn from it
};

// Insertion-ordered set of observed terminals with an incrementally
// maintained reward ranking (descending reward, ties by insertion order).
class DatasetX {
 public:
  explicit DatasetX(Env env, PrtConfig prt = {});

  // Returns false if x was already present. Throws if the reward disagrees
  // with the stored one.
  bool insert(const State& x, double reward, int round);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const State& x) const;
  const Observation& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Observation>& entries() const { return entries_; }
  // Indices into entries(), best reward first.
  const std::vector<std::uint32_t>& ranked() const { return ranked_; }
  const PrtConfig& prt_config() const { return prt_; }
  const Env& env() const { return env_; }

  // Size of the high-reward partition: ceil(top_fraction * |X|), at least 1.
  std::size_t top_count() const;

  // Reward-prioritized replay batch, as indices into entries():
  // ceil(top_batch_fraction * batch) drawn uniformly with replacement from
  // the top partition, the rest uniformly from the remainder.
  std::vector<std::size_t> prt_sample(std::size_t batch_size, Rng& rng) const;

  // CSV with header terminal,reward,round_first_seen in insertion order.
  void write_csv(std::ostream& os) const;

  void write(std::ostream& os) const;
  static DatasetX read(std::istream& is, const Env& env, PrtConfig prt);

 private:
  Env env_;
  PrtConfig prt_;
  std::vector<Observation> entries_;
  std::vector<std::uint32_t> ranked_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

}  // namespace flowlab
