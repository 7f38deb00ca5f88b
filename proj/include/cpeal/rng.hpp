// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "cpeal/errors.hpp"
#include "cpeal/types.hpp"

namespace cpeal {

// SplitMix64 (Steele et al., 2014): one 64-bit word of state, closed-form
// output mixing. Every random stream in the project is one of these,
// constructed from an explicit seed; there is no global RNG state.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller. Two uniforms are consumed per draw and
  // nothing is cached, so the stream position never depends on call parity.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). Plain modulo; the bias is irrelevant at the
  // pool sizes involved and the draw stays a single next() call.
  Index below(Index n) noexcept {
    return static_cast<Index>(next() % static_cast<std::uint64_t>(n));
  }

 private:
  std::uint64_t state_;
};

// Deterministic seed derivation: run one mixing step on `a`, fold `b` into
// the result, mix again. Used for hash(seed, cycle) style sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  SplitMix64 g(a);
  SplitMix64 h(g.next() ^ b);
  return h.next();
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) noexcept {
  return mix_seed(mix_seed(a, b), c);
}

// Fisher-Yates shuffle driven by SplitMix64.
template <typename T>
void shuffle(std::vector<T>& values, SplitMix64& rng) {
  for (Index i = static_cast<Index>(values.size()) - 1; i > 0; --i) {
    const Index j = rng.below(i + 1);
    std::swap(values[static_cast<std::size_t>(i)],
              values[static_cast<std::size_t>(j)]);
  }
}

// First k entries of a seeded permutation of 0..n-1.
inline std::vector<Index> sample_without_replacement(Index n, Index k,
                                                     SplitMix64& rng) {
  if (k < 0 || k > n) throw SelectionError("sample size exceeds population");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  shuffle(perm, rng);
  perm.resize(static_cast<std::size_t>(k));
  return perm;
}

// Row-major fill of i.i.d. scaled normals.
inline Matrix gaussian_matrix(Index rows, Index cols, Real scale,
                              SplitMix64& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

}  // namespace cpeal
