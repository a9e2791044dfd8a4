#include "cpg_actor/mlp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "cpg_actor/numeric.hpp"

namespace cpg_actor {

std::size_t MlpArch::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

std::size_t MlpArch::weight_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return off;
}

std::size_t MlpArch::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + sizes[layer] * sizes[layer + 1];
}

void MlpArch::validate() const {
  if (sizes.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("mlp layer sizes must be positive");
  }
}

void mlp_forward(const MlpArch& arch, std::span<const double> params,
                 std::span<const double> input, std::span<double> output) {
  if (params.size() != arch.param_count() || input.size() != arch.input_size() ||
      output.size() != arch.output_size()) {
    throw std::invalid_argument("mlp_forward: dimension mismatch");
  }
  // Two ping-pong buffers sized to the widest layer.
  std::size_t widest = 0;
  for (std::size_t s : arch.sizes) widest = std::max(widest, s);
  thread_local std::vector<double> a, b;
  a.resize(widest);
  b.resize(widest);
  std::copy(input.begin(), input.end(), a.begin());

  const std::size_t layers = arch.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = arch.sizes[l];
    const std::size_t out = arch.sizes[l + 1];
    const double* w = params.data() + arch.weight_offset(l);
    const double* bias = params.data() + arch.bias_offset(l);
    matvec_kernel(w, out, in, a.data(), b.data());
    for (std::size_t r = 0; r < out; ++r) b[r] = b[r] + bias[r];
    if (l + 1 < layers) {
      for (std::size_t r = 0; r < out; ++r) b[r] = std::tanh(b[r]);
    }
    std::swap(a, b);
  }
  std::copy(a.begin(), a.begin() + arch.output_size(), output.begin());
}

ad::Var record_mlp(ad::Tape& tape, const MlpArch& arch, const ad::ParamRef& params,
                   ad::Var input) {
  if (params.value.size() != arch.param_count() || tape.size(input) != arch.input_size()) {
    throw std::invalid_argument("record_mlp: dimension mismatch");
  }
  ad::Var h = input;
  const std::size_t layers = arch.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = arch.sizes[l];
    const std::size_t out = arch.sizes[l + 1];
    const ad::Var w = tape.param(params.slice(arch.weight_offset(l), in * out));
    const ad::Var b = tape.param(params.slice(arch.bias_offset(l), out));
    h = tape.add(tape.matvec(w, out, h), b);
    if (l + 1 < layers) h = tape.tanh(h);
  }
  return h;
}

std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, double gain,
                                      std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t big = std::max(rows, cols);
  const std::size_t small = std::min(rows, cols);
  Eigen::MatrixXd g(big, small);
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix so the distribution is uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(small, small);
  for (std::size_t k = 0; k < small; ++k) {
    if (r(k, k) < 0.0) q.col(static_cast<Eigen::Index>(k)) *= -1.0;
  }
  Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
  w *= gain;
  // Eigen's column-major storage is the input-major layout used here.
  return std::vector<double>(w.data(), w.data() + w.size());
}

std::vector<double> init_mlp(const MlpArch& arch, std::mt19937_64& rng, double hidden_gain,
                             double output_gain) {
  arch.validate();
  std::vector<double> params(arch.param_count(), 0.0);
  const std::size_t layers = arch.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = arch.sizes[l];
    const std::size_t out = arch.sizes[l + 1];
    const double gain = l + 1 < layers ? hidden_gain : output_gain;
    if (gain == 0.0) continue;
    const auto w = orthogonal_matrix(out, in, gain, rng);
    std::copy(w.begin(), w.end(), params.begin() + arch.weight_offset(l));
  }
  return params;
}

}  // namespace cpg_actor
