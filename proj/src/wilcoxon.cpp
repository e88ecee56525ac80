#include "rldn/wilcoxon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rldn/errors.hpp"

namespace rldn::metrics {

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("wilcoxon_signed_rank: paired samples differ in length");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (std::isnan(d)) throw NumericError("wilcoxon_signed_rank: NaN difference at index " + std::to_string(i));
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n < kWilcoxonMinPairs) {
    throw InsufficientDataError("wilcoxon_signed_rank: " + std::to_string(n) +
                                " nonzero differences, need at least " +
                                std::to_string(kWilcoxonMinPairs));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(diffs[i]) < std::abs(diffs[j]); });

  // Doubled ranks stay integral under average-rank tie handling.
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const long shared = static_cast<long>(i + 1 + j + 1);  // 2 * average of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = shared;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  WilcoxonResult res;
  res.n = n;
  long w_plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diffs[i] > 0) w_plus2 += rank2[i];
  }
  res.w_plus = static_cast<double>(w_plus2) / 2.0;
  res.w_minus = static_cast<double>(total2 - w_plus2) / 2.0;
  res.statistic = std::min(res.w_plus, res.w_minus);

  if (n <= kWilcoxonExactMax) {
    res.exact = true;
    // counts[s]: sign assignments whose doubled positive rank sum is s.
    std::vector<double> counts(static_cast<std::size_t>(total2) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long r : rank2) {
      for (long s = reach; s >= 0; --s) counts[s + r] += counts[s];
      reach += r;
    }
    double below = 0.0, above = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w_plus2) below += counts[s];
      if (s >= w_plus2) above += counts[s];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    res.p_value = std::min(1.0, 2.0 * std::min(below, above) / all);
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double dev = std::abs(res.w_plus - mean) - 0.5;
    res.p_value = dev <= 0.0 ? 1.0 : std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
  }
  return res;
}

}  // namespace rldn::metrics
