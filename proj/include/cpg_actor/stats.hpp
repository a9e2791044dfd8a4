#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cpg_actor {

double mean_of(std::span<const double> x);
// Population variance.
double variance_of(std::span<const double> x);

// One-sided Wilcoxon rank-sum (Mann-Whitney) test of H1: x tends to exceed y.
// Ties get mid-ranks. The p-value is exact by enumerating every split of the
// pooled sample when C(n + m, n) <= max_exact, and uses the normal
// approximation with tie correction otherwise.
struct RankSumResult {
  double rank_sum = 0.0;  // of x
  double u = 0.0;         // Mann-Whitney U of x
  double p_value = 1.0;
  bool exact = false;
};

RankSumResult wilcoxon_rank_sum_greater(std::span<const double> x, std::span<const double> y,
                                        std::size_t max_exact = 200000);

// First Wasserstein distance between two empirical distributions.
double wasserstein1(std::span<const double> a, std::span<const double> b);

// Counts per bin for `edges` (k + 1 ascending edges -> k bins). Bins are
// half-open except the last, which includes its right edge; values outside
// are dropped.
std::vector<std::size_t> histogram(std::span<const double> values, std::span<const double> edges);

// Evenly spaced edges covering [lo, hi].
std::vector<double> linear_edges(double lo, double hi, std::size_t bins);

// Frequency (Hz) of the largest peak of the mean-removed signal, from a DFT
// zero-padded by `pad` and refined with a parabolic fit on the magnitudes.
double dominant_frequency(std::span<const double> signal, double dt, std::size_t pad = 16);

}  // namespace cpg_actor
