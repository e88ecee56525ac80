#pragma once

// Shared helpers for the unit and acceptance tests: random inputs, a central
// finite-difference gradient checker and brute-force oracles that do not
// reuse any library code path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "rldn/image.hpp"
#include "rldn/ops.hpp"
#include "rldn/random.hpp"
#include "rldn/tensor.hpp"

namespace rldn::test {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

/// Random values kept at least `gap` away from zero, for ops with a kink there.
inline Tensor away_from_zero(Rng& rng, Shape shape, double gap = 1e-2) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (double& x : t.mutable_data()) {
    if (std::abs(x) < gap) x = x < 0 ? x - gap : x + gap;
  }
  return t;
}

inline Image random_image(Rng& rng, std::size_t h, std::size_t w) {
  Image img(h, w);
  for (double& p : img.pixels) p = rng.uniform();
  return img;
}

using GraphFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Projects the output of `f` onto a fixed random direction so every output
/// element contributes to the checked scalar.
struct GradCheck {
  double rel_error = 0.0;
  double analytic_norm = 0.0;
};

/// ||analytic - numeric|| / max(||analytic||, ||numeric||) over all inputs,
/// numeric by central differences with step h. `only` restricts the check
/// to the listed flat indices of each input (all when empty).
inline GradCheck check_gradients(const GraphFn& f, const std::vector<Tensor>& inputs, Rng& rng, double h = 1e-5,
                                 const std::vector<std::vector<std::size_t>>& only = {}) {
  Tensor probe;
  {
    NoGradGuard guard;
    probe = f(inputs);
  }
  std::vector<double> dir(probe.numel());
  for (double& d : dir) d = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  const Tensor direction = Tensor::from(probe.shape(), dir);
  auto objective = [&](const std::vector<Tensor>& xs) { return ops::sum(ops::mul(f(xs), direction)); };

  for (const Tensor& t : inputs) t.node()->grad.clear();
  objective(inputs).backward();

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& t = inputs[k];
    std::vector<std::size_t> idx;
    if (only.size() > k && !only[k].empty()) {
      idx = only[k];
    } else {
      idx.resize(t.numel());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
    }
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i : idx) {
      double& x = t.node()->data[i];
      const double saved = x;
      double up, down;
      {
        NoGradGuard guard;
        x = saved + h;
        up = objective(inputs).item();
        x = saved - h;
        down = objective(inputs).item();
      }
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
  return {std::sqrt(diff2) / scale, std::sqrt(a2)};
}

// Metric oracles: direct double loops over the pixel grid.

inline double oracle_mse(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.height; ++r) {
    for (std::size_t c = 0; c < a.width; ++c) {
      const double d = a.at(r, c) - b.at(r, c);
      s += d * d;
    }
  }
  return s / static_cast<double>(a.height * a.width);
}

inline double oracle_psnr(const Image& a, const Image& b) {
  const double m = oracle_mse(a, b);
  return m == 0.0 ? 100.0 : 10.0 * std::log10(1.0 / m);
}

inline double oracle_rmse(const Image& a, const Image& b) { return std::sqrt(oracle_mse(a, b)); }

inline double oracle_window_ssim(const Image& x, const Image& y, std::size_t r0, std::size_t c0, std::size_t wh,
                                 std::size_t ww) {
  const double n = static_cast<double>(wh * ww);
  double mx = 0.0, my = 0.0;
  for (std::size_t r = r0; r < r0 + wh; ++r) {
    for (std::size_t c = c0; c < c0 + ww; ++c) {
      mx += x.at(r, c);
      my += y.at(r, c);
    }
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t r = r0; r < r0 + wh; ++r) {
    for (std::size_t c = c0; c < c0 + ww; ++c) {
      vx += (x.at(r, c) - mx) * (x.at(r, c) - mx);
      vy += (y.at(r, c) - my) * (y.at(r, c) - my);
      cxy += (x.at(r, c) - mx) * (y.at(r, c) - my);
    }
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  return (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

inline double oracle_ssim(const Image& x, const Image& y) {
  constexpr std::size_t k = 7;
  if (x.height < k || x.width < k) return oracle_window_ssim(x, y, 0, 0, x.height, x.width);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + k <= x.height; ++r) {
    for (std::size_t c = 0; c + k <= x.width; ++c) {
      total += oracle_window_ssim(x, y, r, c, k, k);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

/// A_t = sum_l (gamma lambda)^l delta_{t+l}, summed term by term and cut at
/// the first done step.
inline std::vector<double> oracle_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                                      const std::vector<bool>& dones, double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  auto next_value = [&](std::size_t t) { return t + 1 < n ? values[t + 1] : bootstrap; };
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      const double delta = rewards[l] + (dones[l] ? 0.0 : gamma * next_value(l)) - values[l];
      adv[t] += weight * delta;
      if (dones[l]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

/// Two-sided exact signed-rank p-value by walking all 2^n sign patterns.
struct WilcoxonOracle {
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

inline WilcoxonOracle oracle_wilcoxon(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  }
  const std::size_t n = d.size();
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Average rank: 1 + #smaller + (#equal - 1) / 2.
    double smaller = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) smaller += 1.0;
      else if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
    }
    ranks[i] = 1.0 + smaller + (equal - 1.0) / 2.0;
  }
  WilcoxonOracle out;
  out.n = n;
  for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? out.w_plus : out.w_minus) += ranks[i];
  const double total = out.w_plus + out.w_minus;
  const double observed = std::min(out.w_plus, out.w_minus);
  std::size_t extreme = 0;
  const std::size_t patterns = std::size_t{1} << n;
  for (std::size_t mask = 0; mask < patterns; ++mask) {
    double wp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) wp += ranks[i];
    }
    if (std::min(wp, total - wp) <= observed + 1e-9) ++extreme;
  }
  out.p_value = std::min(1.0, static_cast<double>(extreme) / static_cast<double>(patterns));
  return out;
}

}  // namespace rldn::test
