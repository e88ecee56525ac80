#include "rldn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rldn::metrics {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// (H+1) x (W+1) summed-area table of f(x, y).
template <typename F>
std::vector<double> integral(const Image& x, const Image& y, F f) {
  const std::size_t w1 = x.width + 1;
  std::vector<double> table((x.height + 1) * w1, 0.0);
  for (std::size_t r = 0; r < x.height; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < x.width; ++c) {
      row += f(x.at(r, c), y.at(r, c));
      table[(r + 1) * w1 + c + 1] = table[r * w1 + c + 1] + row;
    }
  }
  return table;
}

double box(const std::vector<double>& t, std::size_t w1, std::size_t r, std::size_t c,
           std::size_t size) {
  return t[(r + size) * w1 + c + size] - t[r * w1 + c + size] - t[(r + size) * w1 + c] + t[r * w1 + c];
}

double sanitize(double v) { return std::isnan(v) ? 0.0 : v; }

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    total += d * d;
  }
  return total / static_cast<double>(a.size());
}

double rmse(const Image& denoised, const Image& reference) {
  return std::sqrt(mse(denoised, reference));
}

double psnr(const Image& denoised, const Image& reference, double max_i) {
  const double err = mse(denoised, reference);
  if (err == 0.0) return kPsnrCap;
  return 10.0 * std::log10(max_i * max_i / err);
}

double ssim_from_moments(double mu_x, double mu_y, double var_x, double var_y, double cov_xy) {
  return ((2.0 * mu_x * mu_y + kC1) * (2.0 * cov_xy + kC2)) /
         ((mu_x * mu_x + mu_y * mu_y + kC1) * (var_x + var_y + kC2));
}

double ssim(const Image& denoised, const Image& reference) {
  require_same_shape(denoised, reference, "ssim");
  const std::size_t h = denoised.height, w = denoised.width;
  const std::size_t win = kSsimWindow;
  if (h < win || w < win) {
    const double n = static_cast<double>(denoised.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < denoised.size(); ++i) {
      mx += denoised.pixels[i];
      my += reference.pixels[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t i = 0; i < denoised.size(); ++i) {
      const double dx = denoised.pixels[i] - mx, dy = reference.pixels[i] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    return ssim_from_moments(mx, my, vx / n, vy / n, cxy / n);
  }

  const auto sx = integral(denoised, reference, [](double a, double) { return a; });
  const auto sy = integral(denoised, reference, [](double, double b) { return b; });
  const auto sxx = integral(denoised, reference, [](double a, double) { return a * a; });
  const auto syy = integral(denoised, reference, [](double, double b) { return b * b; });
  const auto sxy = integral(denoised, reference, [](double a, double b) { return a * b; });

  const std::size_t w1 = w + 1;
  const double n = static_cast<double>(win * win);
  double total = 0.0;
  for (std::size_t r = 0; r + win <= h; ++r) {
    for (std::size_t c = 0; c + win <= w; ++c) {
      const double mx = box(sx, w1, r, c, win) / n;
      const double my = box(sy, w1, r, c, win) / n;
      const double vx = box(sxx, w1, r, c, win) / n - mx * mx;
      const double vy = box(syy, w1, r, c, win) / n - my * my;
      const double cxy = box(sxy, w1, r, c, win) / n - mx * my;
      total += ssim_from_moments(mx, my, vx, vy, cxy);
    }
  }
  return total / static_cast<double>((h - win + 1) * (w - win + 1));
}

double reward_from_components(double psnr_db, double ssim_value, RewardOptions options) {
  const double p = sanitize(psnr_db);
  const double s = sanitize(ssim_value);
  double r = 0.0;
  switch (options.mode) {
    case RewardMode::kPsnrSsim:
      r = (p + s) / 2.0;
      break;
    case RewardMode::kPsnrOnly:
      r = p;
      break;
    case RewardMode::kSsimOnly:
      r = s;
      break;
  }
  // Infinite inputs can still make the sum NaN (inf - inf).
  r = sanitize(r);
  if (!options.clip) return r;
  return std::max(0.0, std::min(r, kRewardMax));
}

QualityReport assess(const Image& denoised, const Image& reference, RewardOptions options) {
  QualityReport q;
  q.psnr_db = psnr(denoised, reference);
  q.ssim = ssim(denoised, reference);
  q.rmse = rmse(denoised, reference);
  q.reward = reward_from_components(q.psnr_db, q.ssim, options);
  return q;
}

double reward(const Image& denoised, const Image& reference, RewardOptions options) {
  return reward_from_components(psnr(denoised, reference), ssim(denoised, reference), options);
}

const char* reward_mode_name(RewardMode mode) {
  switch (mode) {
    case RewardMode::kPsnrSsim:
      return "psnr+ssim";
    case RewardMode::kPsnrOnly:
      return "psnr_only";
    case RewardMode::kSsimOnly:
      return "ssim_only";
  }
  return "?";
}

}  // namespace rldn::metrics
