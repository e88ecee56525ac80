#pragma once

#include <span>

#include "rldn/image.hpp"

namespace rldn::metrics {

/// PSNR reported when the two images are identical.
inline constexpr double kPsnrCap = 100.0;
inline constexpr double kRewardMax = 100.0;
inline constexpr int kSsimWindow = 7;

double mse(const Image& a, const Image& b);
double rmse(const Image& denoised, const Image& reference);

/// 10 log10(max_i^2 / MSE) in dB; kPsnrCap when MSE is zero.
double psnr(const Image& denoised, const Image& reference, double max_i = 1.0);

/// Mean SSIM over 7x7 uniform windows at every valid position (dynamic
/// range 1). Images smaller than the window use one global window.
double ssim(const Image& denoised, const Image& reference);

/// SSIM of a single window given its first and second moments.
double ssim_from_moments(double mu_x, double mu_y, double var_x, double var_y, double cov_xy);

enum class RewardMode { kPsnrSsim, kPsnrOnly, kSsimOnly };

struct RewardOptions {
  RewardMode mode = RewardMode::kPsnrSsim;
  bool clip = true;
};

/// Combines the quality components: NaN components count as zero and the
/// result is clipped to [0, 100] unless clipping is disabled.
double reward_from_components(double psnr_db, double ssim_value, RewardOptions options = {});

struct QualityReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  double reward = 0.0;
};

QualityReport assess(const Image& denoised, const Image& reference, RewardOptions options = {});

/// Reward of `denoised` against `reference` (default: average of PSNR and
/// SSIM, clipped).
double reward(const Image& denoised, const Image& reference, RewardOptions options = {});

const char* reward_mode_name(RewardMode mode);

}  // namespace rldn::metrics
