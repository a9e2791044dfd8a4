#pragma once

// Scalar kernels shared by the direct and taped evaluation paths. Both paths
// must call these so their results agree bit for bit.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>

namespace cpg_actor {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
  return y > 30.0 ? y : std::log(std::expm1(y));
}

// out = W x with W stored input-major: element (r, c) lives at w[c * rows + r].
inline void matvec_kernel(const double* w, std::size_t rows, std::size_t cols,
                          const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    const double xc = x[c];
    const double* col = w + c * rows;
    for (std::size_t r = 0; r < rows; ++r) out[r] += col[r] * xc;
  }
}

// Derives an independent seed for a sub-stream (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace cpg_actor
