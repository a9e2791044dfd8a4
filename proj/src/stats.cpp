#include "cpg_actor/stats.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace cpg_actor {

double mean_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

namespace {

std::vector<double> mid_ranks(std::span<const double> pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double binomial(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

}  // namespace

RankSumResult wilcoxon_rank_sum_greater(std::span<const double> x, std::span<const double> y,
                                        std::size_t max_exact) {
  if (x.empty() || y.empty()) throw std::invalid_argument("rank-sum test needs two non-empty samples");
  const std::size_t n = x.size();
  const std::size_t m = y.size();
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto ranks = mid_ranks(pooled);

  RankSumResult res;
  for (std::size_t i = 0; i < n; ++i) res.rank_sum += ranks[i];
  res.u = res.rank_sum - static_cast<double>(n * (n + 1)) / 2.0;

  const std::size_t total = n + m;
  if (binomial(total, n) <= static_cast<double>(max_exact)) {
    // Walk every n-subset of the pooled ranks.
    std::vector<std::size_t> pick(n);
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::size_t count = 0, extreme = 0;
    const double tol = 1e-9;
    while (true) {
      double s = 0.0;
      for (std::size_t k : pick) s += ranks[k];
      ++count;
      if (s >= res.rank_sum - tol) ++extreme;
      std::size_t i = n;
      while (i > 0 && pick[i - 1] == total - n + (i - 1)) --i;
      if (i == 0) break;
      ++pick[i - 1];
      for (std::size_t k = i; k < n; ++k) pick[k] = pick[k - 1] + 1;
    }
    res.p_value = static_cast<double>(extreme) / static_cast<double>(count);
    res.exact = true;
    return res;
  }

  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  const double nt = nn + mm;
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double mu = nn * mm / 2.0;
  const double sigma = std::sqrt(nn * mm / 12.0 * ((nt + 1.0) - tie_term / (nt * (nt - 1.0))));
  const double z = sigma > 0.0 ? (res.u - mu - 0.5) / sigma : 0.0;
  res.p_value = 0.5 * std::erfc(z / std::numbers::sqrt2);
  return res;
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1 needs non-empty samples");
  std::vector<double> xa(a.begin(), a.end()), xb(b.begin(), b.end());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  // Integrate |F_a - F_b| over the merged support.
  std::vector<double> pts = xa;
  pts.insert(pts.end(), xb.begin(), xb.end());
  std::sort(pts.begin(), pts.end());
  const double na = static_cast<double>(xa.size());
  const double nb = static_cast<double>(xb.size());
  double total = 0.0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    while (ia < xa.size() && xa[ia] <= pts[k]) ++ia;
    while (ib < xb.size() && xb[ib] <= pts[k]) ++ib;
    total += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (pts[k + 1] - pts[k]);
  }
  return total;
}

std::vector<std::size_t> histogram(std::span<const double> values, std::span<const double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("histogram needs at least two edges");
  const std::size_t bins = edges.size() - 1;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (v < edges.front() || v > edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    std::size_t k = static_cast<std::size_t>(it - edges.begin());
    k = k == 0 ? 0 : k - 1;
    if (k >= bins) k = bins - 1;
    ++counts[k];
  }
  return counts;
}

std::vector<double> linear_edges(double lo, double hi, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("linear_edges needs at least one bin");
  if (!(hi > lo)) {
    const double pad = std::max(1e-12, std::abs(lo) * 1e-9);
    lo -= pad;
    hi += pad;
  }
  std::vector<double> e(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) {
    e[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  }
  e.back() = hi;
  return e;
}

double dominant_frequency(std::span<const double> signal, double dt, std::size_t pad) {
  const std::size_t n = signal.size();
  if (n < 4 || !(dt > 0.0) || pad == 0) throw std::invalid_argument("dominant_frequency: bad input");
  const double mean = mean_of(signal);
  const std::size_t len = n * pad;
  const std::size_t half = len / 2;
  std::vector<double> mag(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    const double w = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
    const std::complex<double> step = std::polar(1.0, w);
    std::complex<double> rot = 1.0, acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += (signal[t] - mean) * rot;
      rot *= step;
    }
    mag[k] = std::abs(acc);
  }
  std::size_t best = 1;
  for (std::size_t k = 1; k <= half; ++k) {
    if (mag[k] > mag[best]) best = k;
  }
  double shift = 0.0;
  if (best > 0 && best < half) {
    const double l = mag[best - 1], c = mag[best], r = mag[best + 1];
    const double den = l - 2.0 * c + r;
    if (den != 0.0) shift = 0.5 * (l - r) / den;
  }
  return (static_cast<double>(best) + shift) / (static_cast<double>(len) * dt);
}

}  // namespace cpg_actor
