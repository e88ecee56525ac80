#pragma once

#include <cstddef>
#include <span>

namespace rldn::metrics {

struct WilcoxonResult {
  double w_plus = 0.0;     // rank sum of positive differences a - b
  double w_minus = 0.0;    // rank sum of negative differences
  double statistic = 0.0;  // min(w_plus, w_minus)
  double p_value = 1.0;    // two-sided
  std::size_t n = 0;       // nonzero differences used
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonMinPairs = 5;
inline constexpr std::size_t kWilcoxonExactMax = 20;

/// Paired signed-rank test on a - b. Zero differences are dropped and tied
/// magnitudes share their average rank. The p-value is exact (full
/// enumeration of the conditional null distribution) for n <= 20, and
/// otherwise uses the continuity-corrected normal approximation with the tie
/// correction. Throws InsufficientDataError below 5 nonzero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

}  // namespace rldn::metrics
