#include "flowlab/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

namespace flowlab {

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("FLOWLAB_THREADS")) {
    std::size_t v = 0;
    const char* end = cap + std::strlen(cap);
    auto [ptr, ec] = std::from_chars(cap, end, v);
    if (ec == std::errc() && ptr == end && v > 0) n = std::min(n, v);
  }
  return n;
}

}  // namespace flowlab
