#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "flare/error.hpp"

namespace flare {

inline constexpr int kSobolMaxDim = 16;

namespace detail {

// Direction-number seeds (degree, polynomial coefficient, initial m values)
// for dimensions 2..16 of the published Joe-Kuo D(6) table. Dimension 1 is
// the van der Corput sequence and needs no seeds.
struct SobolSeed {
  int degree;
  uint32_t poly;
  std::array<uint32_t, 6> m;
};

inline constexpr std::array<SobolSeed, 15> kSobolSeeds = {{
    {1, 0, {1, 0, 0, 0, 0, 0}},
    {2, 1, {1, 3, 0, 0, 0, 0}},
    {3, 1, {1, 3, 1, 0, 0, 0}},
    {3, 2, {1, 1, 1, 0, 0, 0}},
    {4, 1, {1, 1, 3, 3, 0, 0}},
    {4, 4, {1, 3, 5, 13, 0, 0}},
    {5, 2, {1, 1, 5, 5, 17, 0}},
    {5, 4, {1, 1, 5, 5, 5, 0}},
    {5, 7, {1, 1, 7, 11, 19, 0}},
    {5, 11, {1, 1, 5, 1, 1, 0}},
    {5, 13, {1, 1, 1, 3, 11, 0}},
    {5, 14, {1, 3, 5, 5, 31, 0}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
}};

// 32 direction integers per dimension, MSB-aligned.
inline const std::array<std::array<uint32_t, 32>, kSobolMaxDim>&
sobol_directions() {
  static const auto table = [] {
    std::array<std::array<uint32_t, 32>, kSobolMaxDim> v{};
    for (int k = 0; k < 32; ++k) v[0][k] = 1u << (31 - k);
    for (int d = 1; d < kSobolMaxDim; ++d) {
      const SobolSeed& seed = kSobolSeeds[d - 1];
      const int s = seed.degree;
      for (int k = 0; k < s; ++k) v[d][k] = seed.m[k] << (31 - k);
      for (int k = s; k < 32; ++k) {
        uint32_t val = v[d][k - s] ^ (v[d][k - s] >> s);
        for (int j = 1; j < s; ++j)
          if ((seed.poly >> (s - 1 - j)) & 1u) val ^= v[d][k - j];
        v[d][k] = val;
      }
    }
    return v;
  }();
  return table;
}

// Gray-code walk over the integer states of the first `dim` dimensions.
// States for index i depend only on i, so the walk is deterministic.
inline void sobol_states(uint64_t n_points, int dim, uint64_t start_index,
                         std::vector<uint32_t>* states) {
  const auto& dirs = sobol_directions();
  states->assign(static_cast<size_t>(n_points) * dim, 0u);
  std::vector<uint32_t> x(dim, 0u);
  for (uint64_t i = 0; i < start_index + n_points; ++i) {
    if (i > 0) {
      uint64_t prev = i - 1;
      int c = 0;
      while ((prev >> c) & 1ull) ++c;  // rightmost zero bit of i-1
      for (int d = 0; d < dim; ++d) x[d] ^= dirs[d][c];
    }
    if (i >= start_index)
      for (int d = 0; d < dim; ++d)
        (*states)[static_cast<size_t>(i - start_index) * dim + d] = x[d];
  }
}

inline uint32_t reverse_bits32(uint32_t x) {
  x = ((x >> 1) & 0x55555555u) | ((x & 0x55555555u) << 1);
  x = ((x >> 2) & 0x33333333u) | ((x & 0x33333333u) << 2);
  x = ((x >> 4) & 0x0f0f0f0fu) | ((x & 0x0f0f0f0fu) << 4);
  x = ((x >> 8) & 0x00ff00ffu) | ((x & 0x00ff00ffu) << 8);
  return (x >> 16) | (x << 16);
}

// Hash-based nested uniform scramble of the bit-reversed state; applied per
// dimension with an independent hashed seed, this realises Owen scrambling.
inline uint32_t laine_karras_permutation(uint32_t x, uint32_t seed) {
  x += seed;
  x ^= x * 0x6c50b47cu;
  x ^= x * 0xb82f1e52u;
  x ^= x * 0xc7afe638u;
  x ^= x * 0x8d22f6e6u;
  return x;
}

inline uint32_t owen_scramble(uint32_t x, uint32_t seed) {
  x = reverse_bits32(x);
  x = laine_karras_permutation(x, seed);
  return reverse_bits32(x);
}

// splitmix64 step, used to derive independent 32-bit seeds per dimension.
inline uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline void sobol_check_args(int n, int dim) {
  if (n < 1) throw ContractViolation("sobol: need n >= 1");
  if (dim < 1 || dim > kSobolMaxDim)
    throw ContractViolation("sobol: dimension outside supported range 1..16");
}

}  // namespace detail

// Unscrambled sequence, starting at index 1 so the origin is excluded.
// Values are exact dyadic rationals state/2^32 in (0,1).
inline Eigen::MatrixXd sobol_points_raw(int n, int dim) {
  detail::sobol_check_args(n, dim);
  std::vector<uint32_t> states;
  detail::sobol_states(n, dim, 1, &states);
  Eigen::MatrixXd pts(n, dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d)
      pts(i, d) = static_cast<double>(states[static_cast<size_t>(i) * dim + d]) *
                  0x1p-32;
  return pts;
}

// Owen-scrambled sequence keyed by the seed, starting at index 0 (the
// scrambled origin is an ordinary point). The half-integer offset keeps
// every value strictly inside (0,1).
inline Eigen::MatrixXd sobol_points(int n, int dim, uint64_t seed) {
  detail::sobol_check_args(n, dim);
  std::vector<uint32_t> states;
  detail::sobol_states(n, dim, 0, &states);
  std::vector<uint32_t> dim_seeds(dim);
  for (int d = 0; d < dim; ++d)
    dim_seeds[d] = static_cast<uint32_t>(
        detail::splitmix64(seed ^ (0xd1b54a32d192ed03ull + d)));
  Eigen::MatrixXd pts(n, dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) {
      uint32_t s = detail::owen_scramble(
          states[static_cast<size_t>(i) * dim + d], dim_seeds[d]);
      pts(i, d) = (static_cast<double>(s) + 0.5) * 0x1p-32;
    }
  return pts;
}

}  // namespace flare
