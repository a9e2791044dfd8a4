#pragma once

// Fully connected tanh networks with a linear output layer. Weights are
// stored per layer as an input-major matrix followed by the bias vector, so a
// layer mapping `in` to `out` occupies in*out + out consecutive entries.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "cpg_actor/autodiff.hpp"

namespace cpg_actor {

struct MlpArch {
  std::vector<std::size_t> sizes;  // input, hidden..., output

  std::size_t input_size() const { return sizes.front(); }
  std::size_t output_size() const { return sizes.back(); }
  std::size_t layer_count() const { return sizes.size() - 1; }
  std::size_t param_count() const;
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
  void validate() const;

  bool operator==(const MlpArch&) const = default;
};

void mlp_forward(const MlpArch& arch, std::span<const double> params,
                 std::span<const double> input, std::span<double> output);

ad::Var record_mlp(ad::Tape& tape, const MlpArch& arch, const ad::ParamRef& params,
                   ad::Var input);

// Orthogonal weights (hidden layers scaled by hidden_gain, the last by
// output_gain) and zero biases. output_gain = 0 zeroes the last layer.
std::vector<double> init_mlp(const MlpArch& arch, std::mt19937_64& rng, double hidden_gain,
                             double output_gain);

// Orthogonal rows x cols matrix in input-major order, scaled by gain.
std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, double gain,
                                      std::mt19937_64& rng);

}  // namespace cpg_actor
