#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace neurokernel {

// mt19937_64's output sequence is fixed by the standard, unlike the
// distribution classes, so seeded runs reproduce across standard libraries.
using Rng = std::mt19937_64;

inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return n == 0 ? 0 : static_cast<std::size_t>(rng() % n);
}

inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(span == 0 ? rng() : rng() % span);
}

inline bool coin(Rng& rng) { return (rng() >> 63) != 0; }

}  // namespace neurokernel
