#pragma once

// Feedback network: proprioceptive observation -> per-oscillator additive
// terms on the phase (xi) and amplitude (kappa) dynamics.

#include <array>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "cpg_actor/cpg.hpp"
#include "cpg_actor/mlp.hpp"

namespace cpg_actor {

inline constexpr std::size_t kObservationSize = 8;

// q (2) | q_dot (2) | previous desired positions (2) | hip height | hip velocity
using Observation = std::array<double, kObservationSize>;

struct FeedbackArch {
  std::size_t oscillators = 2;
  std::vector<std::size_t> hidden = {32, 32};
  double xi_scale = 4.0 * std::numbers::pi;  // rad/s
  double kappa_scale = 50.0;                       // 1/s^2

  MlpArch mlp() const;
  std::size_t param_count() const { return mlp().param_count(); }
  // Per-output bound: xi_scale for the first N outputs, kappa_scale after.
  std::vector<double> output_scale() const;
  // Offset and length of the last layer (weights then biases) in the flat vector.
  std::size_t output_layer_offset() const;
  std::size_t output_weight_count() const;
  std::size_t output_bias_count() const { return 2 * oscillators; }

  bool operator==(const FeedbackArch&) const = default;
};

FeedbackSignals feedback_forward(const FeedbackArch& arch, std::span<const double> obs,
                                 std::span<const double> weights);

struct TapedFeedback {
  ad::Var xi;
  ad::Var kappa;
};

TapedFeedback record_feedback(ad::Tape& tape, const FeedbackArch& arch, ad::Var obs,
                              const ad::ParamRef& weights);

// Orthogonal hidden layers with gain sqrt(2); the output layer starts at zero.
std::vector<double> init_feedback(std::uint64_t seed, const FeedbackArch& arch);

}  // namespace cpg_actor
