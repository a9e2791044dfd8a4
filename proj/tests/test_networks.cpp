#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "cpg_actor/feedback.hpp"
#include "cpg_actor/mlp.hpp"

using namespace cpg_actor;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Independent evaluation with explicit per-layer matrices W[r][c].
std::vector<double> oracle_forward(const std::vector<std::size_t>& sizes, const std::vector<double>& p,
                                   std::vector<double> h) {
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    std::vector<std::vector<double>> w(out, std::vector<double>(in));
    for (std::size_t c = 0; c < in; ++c) {
      for (std::size_t r = 0; r < out; ++r) w[r][c] = p[off + c * out + r];
    }
    off += in * out;
    std::vector<double> next(out);
    for (std::size_t r = 0; r < out; ++r) {
      long double acc = p[off + r];
      for (std::size_t c = 0; c < in; ++c) acc += static_cast<long double>(w[r][c]) * h[c];
      next[r] = static_cast<double>(acc);
      if (l + 2 < sizes.size()) next[r] = std::tanh(next[r]);
    }
    off += out;
    h = next;
  }
  return h;
}

}  // namespace

TEST_CASE("layout offsets") {
  const MlpArch arch{{8, 64, 64, 2}};
  CHECK(arch.param_count() == 8 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2);
  CHECK(arch.weight_offset(0) == 0);
  CHECK(arch.bias_offset(0) == 512);
  CHECK(arch.weight_offset(1) == 576);
  CHECK(arch.bias_offset(2) == arch.param_count() - 2);
  CHECK_THROWS(MlpArch{{8}}.validate());
  CHECK_THROWS(MlpArch{{8, 0, 2}}.validate());
}

TEST_CASE("forward pass matches an independent matrix oracle") {
  const MlpArch arch{{8, 16, 12, 3}};
  const auto p = random_vec(arch.param_count(), 1);
  const auto x = random_vec(8, 2, 1.0);
  std::vector<double> y(3);
  mlp_forward(arch, p, x, y);
  const auto want = oracle_forward(arch.sizes, p, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(want[i]).epsilon(1e-13));
}

TEST_CASE("zero weights give zero output") {
  const MlpArch arch{{8, 64, 64, 2}};
  const std::vector<double> p(arch.param_count(), 0.0);
  std::vector<double> y(2, 1.0);
  mlp_forward(arch, p, random_vec(8, 3), y);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
}

TEST_CASE("permuting hidden units consistently leaves the output unchanged") {
  const MlpArch arch{{4, 6, 2}};
  const auto p = random_vec(arch.param_count(), 4);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<double> q = p;
  for (std::size_t k = 0; k < 6; ++k) {
    for (std::size_t c = 0; c < 4; ++c) q[arch.weight_offset(0) + c * 6 + k] = p[arch.weight_offset(0) + c * 6 + perm[k]];
    q[arch.bias_offset(0) + k] = p[arch.bias_offset(0) + perm[k]];
    for (std::size_t r = 0; r < 2; ++r) q[arch.weight_offset(1) + k * 2 + r] = p[arch.weight_offset(1) + perm[k] * 2 + r];
  }
  const auto x = random_vec(4, 5, 1.0);
  std::vector<double> a(2), b(2);
  mlp_forward(arch, p, x, a);
  mlp_forward(arch, q, x, b);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
  CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-14));
}

TEST_CASE("taped network equals the direct pass bitwise and differentiates correctly") {
  const MlpArch arch{{8, 10, 7, 3}};
  const auto p = random_vec(arch.param_count(), 6);
  const auto x = random_vec(8, 7, 1.0);
  std::vector<double> y(3);
  mlp_forward(arch, p, x, y);
  ad::Tape t;
  const auto out = record_mlp(t, arch, ad::ParamRef{p, {}}, t.constant(x));
  const auto v = t.value(out);
  CHECK(std::vector<double>(v.begin(), v.end()) == y);

  const ad::TapedFn fn = [&](ad::Tape& tape, ad::ParamRef pr) {
    const auto o = record_mlp(tape, arch, pr, tape.constant(x));
    return tape.sum(tape.mul(o, tape.constant({1.0, -2.0, 0.5})));
  };
  CHECK(ad::finite_diff_check(fn, p, 1e-6, 1e-5, nullptr, 1e-4).passed());
}

TEST_CASE("orthogonal initialization") {
  std::mt19937_64 rng(7);
  SUBCASE("tall matrix has orthonormal columns scaled by the gain") {
    const std::size_t rows = 12, cols = 5;
    const auto w = orthogonal_matrix(rows, cols, 2.0, rng);
    for (std::size_t a = 0; a < cols; ++a) {
      for (std::size_t b = 0; b < cols; ++b) {
        double dot = 0.0;
        for (std::size_t r = 0; r < rows; ++r) dot += w[a * rows + r] * w[b * rows + r];
        CHECK(dot == doctest::Approx(a == b ? 4.0 : 0.0).epsilon(1e-12).scale(1.0));
      }
    }
  }
  SUBCASE("wide matrix has orthonormal rows") {
    const std::size_t rows = 3, cols = 8;
    const auto w = orthogonal_matrix(rows, cols, 1.0, rng);
    for (std::size_t a = 0; a < rows; ++a) {
      for (std::size_t b = 0; b < rows; ++b) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += w[c * rows + a] * w[c * rows + b];
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12).scale(1.0));
      }
    }
  }
  SUBCASE("init_mlp zeroes biases and honours the output gain") {
    const MlpArch arch{{8, 16, 2}};
    const auto p = init_mlp(arch, rng, std::sqrt(2.0), 0.0);
    for (std::size_t l = 0; l < 2; ++l) {
      for (std::size_t k = 0; k < arch.sizes[l + 1]; ++k) CHECK(p[arch.bias_offset(l) + k] == 0.0);
    }
    for (std::size_t k = arch.weight_offset(1); k < arch.bias_offset(1); ++k) CHECK(p[k] == 0.0);
  }
}

TEST_CASE("feedback outputs are bounded tanh terms") {
  const FeedbackArch arch;
  CHECK(arch.mlp().sizes == std::vector<std::size_t>{8, 32, 32, 4});
  const auto w = random_vec(arch.param_count(), 8, 3.0);
  const auto obs = random_vec(8, 9, 2.0);
  const auto fb = feedback_forward(arch, obs, w);

  std::vector<double> z(4);
  mlp_forward(arch.mlp(), w, obs, z);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(fb.xi[i] == std::tanh(z[i]) * arch.xi_scale);
    CHECK(fb.kappa[i] == std::tanh(z[2 + i]) * arch.kappa_scale);
    CHECK(std::abs(fb.xi[i]) <= arch.xi_scale);
    CHECK(std::abs(fb.kappa[i]) <= arch.kappa_scale);
  }

  ad::Tape t;
  const auto taped = record_feedback(t, arch, t.constant(obs), ad::ParamRef{w, {}});
  CHECK(t.value(taped.xi)[0] == fb.xi[0]);
  CHECK(t.value(taped.xi)[1] == fb.xi[1]);
  CHECK(t.value(taped.kappa)[0] == fb.kappa[0]);
  CHECK(t.value(taped.kappa)[1] == fb.kappa[1]);
}

TEST_CASE("fresh feedback network is silent and seeded") {
  const FeedbackArch arch;
  const auto w = init_feedback(3, arch);
  CHECK(w == init_feedback(3, arch));
  CHECK(w != init_feedback(4, arch));
  for (std::size_t k = arch.output_layer_offset(); k < w.size(); ++k) CHECK(w[k] == 0.0);
  CHECK(arch.output_layer_offset() + arch.output_weight_count() + arch.output_bias_count() == arch.param_count());
  const auto fb = feedback_forward(arch, random_vec(8, 10), w);
  CHECK(fb.xi == std::vector<double>{0.0, 0.0});
  CHECK(fb.kappa == std::vector<double>{0.0, 0.0});
}

TEST_CASE("feedback hidden layers have orthogonal-scale column norms") {
  const FeedbackArch arch;
  const auto w = init_feedback(11, arch);
  const MlpArch m = arch.mlp();
  for (std::size_t l = 0; l + 1 < m.sizes.size() - 1; ++l) {
    const std::size_t in = m.sizes[l], out = m.sizes[l + 1];
    for (std::size_t c = 0; c < in; ++c) {
      double sq = 0.0;
      for (std::size_t r = 0; r < out; ++r) sq += w[m.weight_offset(l) + c * out + r] * w[m.weight_offset(l) + c * out + r];
      CHECK(std::sqrt(sq) >= 0.5);
      CHECK(std::sqrt(sq) <= 2.0);
    }
  }
}

TEST_CASE("every feedback weight receives gradient once the output layer is live") {
  const FeedbackArch arch;
  auto w = init_feedback(12, arch);
  const auto bump = random_vec(arch.output_weight_count() + arch.output_bias_count(), 13, 0.3);
  for (std::size_t k = 0; k < bump.size(); ++k) w[arch.output_layer_offset() + k] = bump[k];
  const auto obs = random_vec(8, 14, 1.0);
  std::vector<double> g(w.size(), 0.0);
  ad::Tape t;
  const auto fb = record_feedback(t, arch, t.constant(obs), ad::ParamRef{w, g});
  t.backward(t.add(t.sum(t.mul(fb.xi, t.constant({1.0, -0.7}))), t.sum(t.mul(fb.kappa, t.constant({0.3, 0.9})))));
  std::size_t zeros = 0;
  for (double x : g) zeros += (x == 0.0) ? 1 : 0;
  CHECK(zeros == 0);
}
