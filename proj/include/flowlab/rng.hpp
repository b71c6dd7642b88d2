#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>

namespace flowlab {

std::uint64_t splitmix64(std::uint64_t x);

// Thin wrapper over mt19937_64. Distributions are computed here from raw
// engine output so draws do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Independent stream derived from a root seed and a stream name
  // ("train", "monitor", "guide", "theory", ...).
  static Rng substream(std::uint64_t seed, std::string_view name);

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in {0, ..., n-1}; n must be positive.
  std::size_t index(std::size_t n);

  // Draw an index with probability proportional to weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

  friend std::ostream& operator<<(std::ostream& os, const Rng& rng);
  friend std::istream& operator>>(std::istream& is, Rng& rng);

 private:
  std::mt19937_64 engine_;
};

}  // namespace flowlab
