#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cpg_actor {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
  bool operator==(const AdamState&) const = default;
};

double global_norm(std::span<const double> g);

// Scales g in place so its norm is at most max_norm; returns the factor used.
double clip_grad_norm(std::span<double> g, double max_norm);

// One Adam step. grads are clipped in place first when max_grad_norm > 0.
// Returns the pre-clip gradient norm.
double adam_update(std::span<double> params, std::span<double> grads, AdamState& state,
                   const AdamConfig& cfg);

}  // namespace cpg_actor
