#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace cpg_actor {

// Per-entry running mean/variance with clipped z-scores.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(std::size_t dim, double clip = 10.0)
      : mean_(dim, 0.0), var_(dim, 1.0), count_(1e-4), clip_(clip) {}

  // Merges a batch given as consecutive rows of `dim` entries.
  void update(std::span<const double> rows) {
    const std::size_t dim = mean_.size();
    if (dim == 0 || rows.size() % dim != 0) {
      throw std::invalid_argument("normalizer update: ragged batch");
    }
    const std::size_t n = rows.size() / dim;
    if (n == 0) return;
    std::vector<double> bmean(dim, 0.0), bvar(dim, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < dim; ++i) bmean[i] += rows[k * dim + i];
    }
    for (auto& m : bmean) m /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = rows[k * dim + i] - bmean[i];
        bvar[i] += d * d;
      }
    }
    for (auto& v : bvar) v /= static_cast<double>(n);

    const double bc = static_cast<double>(n);
    const double total = count_ + bc;
    for (std::size_t i = 0; i < dim; ++i) {
      const double delta = bmean[i] - mean_[i];
      const double m2 = var_[i] * count_ + bvar[i] * bc + delta * delta * count_ * bc / total;
      mean_[i] += delta * bc / total;
      var_[i] = m2 / total;
    }
    count_ = total;
  }

  void normalize(std::span<const double> raw, std::span<double> out) const {
    if (raw.size() != mean_.size() || out.size() != mean_.size()) {
      throw std::invalid_argument("normalizer: dimension mismatch");
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double z = (raw[i] - mean_[i]) / std::sqrt(var_[i] + 1e-8);
      out[i] = z < -clip_ ? -clip_ : (z > clip_ ? clip_ : z);
    }
  }

  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& var() const { return var_; }
  double count() const { return count_; }
  double clip() const { return clip_; }

  void restore(std::vector<double> mean, std::vector<double> var, double count) {
    if (mean.size() != var.size()) throw std::invalid_argument("normalizer: mean/var mismatch");
    mean_ = std::move(mean);
    var_ = std::move(var);
    count_ = count;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> var_;
  double count_ = 0.0;
  double clip_ = 10.0;
};

}  // namespace cpg_actor
