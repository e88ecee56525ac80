#pragma once

#include <cstdint>

#include "rldn/image.hpp"
#include "rldn/random.hpp"

namespace rldn {

struct PhantomSpec {
  std::size_t size = 32;  // 32, 64 or 128
  int n_ellipses = 5;     // 0..8; datasets draw 3..8
  double background = 0.05;
  double min_intensity = 0.1;
  double max_intensity = 0.9;
  std::uint64_t seed = 0;

  /// Throws ArgumentError for an unsupported size, ellipse count or range.
  void validate() const;
};

/// Background plus a sum of rotated constant-intensity ellipses, clamped to
/// [0, 1]. Deterministic per spec.
Image generate_phantom(const PhantomSpec& spec);

/// Beer-Lambert transmission model: counts ~ Poisson(N0 exp(-mu x)),
/// inverted back to intensity, plus Gaussian noise, clamped to [0, 1].
struct NoiseModel {
  double photon_count = 1e4;
  double gaussian_sigma = 0.01;
  double mu = 4.0;

  void validate() const;
};

Image add_low_dose_noise(const Image& clean, const NoiseModel& noise, Rng& rng);

}  // namespace rldn
