#include "cpg_actor/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cpg_actor {

double global_norm(std::span<const double> g) {
  double s = 0.0;
  for (double x : g) s += x * x;
  return std::sqrt(s);
}

double clip_grad_norm(std::span<double> g, double max_norm) {
  const double norm = global_norm(g);
  if (!(norm > max_norm)) return 1.0;
  const double scale = max_norm / norm;
  for (double& x : g) x *= scale;
  return scale;
}

double adam_update(std::span<double> params, std::span<double> grads, AdamState& state,
                   const AdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_update: dimension mismatch");
  }
  const double norm = global_norm(grads);
  if (cfg.max_grad_norm > 0.0) clip_grad_norm(grads, cfg.max_grad_norm);
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  return norm;
}

}  // namespace cpg_actor
