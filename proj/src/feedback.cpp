#include "cpg_actor/feedback.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cpg_actor {

MlpArch FeedbackArch::mlp() const {
  MlpArch arch;
  arch.sizes.push_back(kObservationSize);
  arch.sizes.insert(arch.sizes.end(), hidden.begin(), hidden.end());
  arch.sizes.push_back(2 * oscillators);
  return arch;
}

std::vector<double> FeedbackArch::output_scale() const {
  std::vector<double> s(2 * oscillators, kappa_scale);
  std::fill(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(oscillators), xi_scale);
  return s;
}

std::size_t FeedbackArch::output_layer_offset() const {
  const MlpArch arch = mlp();
  return arch.weight_offset(arch.layer_count() - 1);
}

std::size_t FeedbackArch::output_weight_count() const {
  const MlpArch arch = mlp();
  return arch.sizes[arch.sizes.size() - 2] * arch.output_size();
}

FeedbackSignals feedback_forward(const FeedbackArch& arch, std::span<const double> obs,
                                 std::span<const double> weights) {
  const MlpArch mlp = arch.mlp();
  if (obs.size() != kObservationSize || weights.size() != mlp.param_count()) {
    throw std::invalid_argument("feedback_forward: dimension mismatch");
  }
  std::vector<double> z(mlp.output_size());
  mlp_forward(mlp, weights, obs, z);
  const auto scale = arch.output_scale();
  const std::size_t n = arch.oscillators;
  FeedbackSignals fb{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    fb.xi[i] = std::tanh(z[i]) * scale[i];
    fb.kappa[i] = std::tanh(z[n + i]) * scale[n + i];
  }
  return fb;
}

TapedFeedback record_feedback(ad::Tape& tape, const FeedbackArch& arch, ad::Var obs,
                              const ad::ParamRef& weights) {
  const MlpArch mlp = arch.mlp();
  const ad::Var z = record_mlp(tape, mlp, weights, obs);
  const ad::Var s = tape.mul(tape.tanh(z), tape.constant(arch.output_scale()));
  const std::size_t n = arch.oscillators;
  std::vector<std::size_t> first(n), second(n);
  std::iota(first.begin(), first.end(), std::size_t{0});
  std::iota(second.begin(), second.end(), n);
  return {tape.gather(s, first), tape.gather(s, second)};
}

std::vector<double> init_feedback(std::uint64_t seed, const FeedbackArch& arch) {
  std::mt19937_64 rng(seed);
  return init_mlp(arch.mlp(), rng, std::sqrt(2.0), 0.0);
}

}  // namespace cpg_actor
