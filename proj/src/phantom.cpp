#include "rldn/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rldn/errors.hpp"

namespace rldn {

void PhantomSpec::validate() const {
  if (size != 32 && size != 64 && size != 128) throw ArgumentError("phantom size must be 32, 64 or 128");
  if (n_ellipses < 0 || n_ellipses > 8) throw ArgumentError("phantom ellipse count must lie in [0, 8]");
  if (!(min_intensity >= 0.0 && min_intensity <= max_intensity && max_intensity <= 1.0)) {
    throw ArgumentError("phantom intensity range must satisfy 0 <= min <= max <= 1");
  }
  if (!(background >= 0.0 && background <= 1.0)) throw ArgumentError("phantom background must lie in [0, 1]");
}

Image generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  struct Ellipse {
    double cx, cy, a, b, cos_t, sin_t, value;
  };
  std::vector<Ellipse> ellipses;
  for (int i = 0; i < spec.n_ellipses; ++i) {
    Ellipse e{};
    e.cx = rng.uniform(-0.5, 0.5);
    e.cy = rng.uniform(-0.5, 0.5);
    e.a = rng.uniform(0.12, 0.55);
    e.b = rng.uniform(0.12, 0.55);
    const double theta = rng.uniform(0.0, std::numbers::pi);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
    e.value = rng.uniform(spec.min_intensity, spec.max_intensity);
    ellipses.push_back(e);
  }

  const std::size_t n = spec.size;
  Image img(n, n, spec.background);
  for (std::size_t r = 0; r < n; ++r) {
    // Pixel centres mapped to [-1, 1].
    const double y = (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(n) - 1.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double x = (2.0 * static_cast<double>(c) + 1.0) / static_cast<double>(n) - 1.0;
      double v = spec.background;
      for (const Ellipse& e : ellipses) {
        const double dx = x - e.cx;
        const double dy = y - e.cy;
        const double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
        const double w = (-dx * e.sin_t + dy * e.cos_t) / e.b;
        if (u * u + w * w <= 1.0) v += e.value;
      }
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

void NoiseModel::validate() const {
  if (!(photon_count > 0.0) || !std::isfinite(photon_count)) throw ArgumentError("photon count must be positive");
  if (!(gaussian_sigma >= 0.0)) throw ArgumentError("gaussian sigma must be >= 0");
  if (!(mu > 0.0)) throw ArgumentError("attenuation mu must be positive");
}

Image add_low_dose_noise(const Image& clean, const NoiseModel& noise, Rng& rng) {
  noise.validate();
  Image out(clean.height, clean.width);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double expected = noise.photon_count * std::exp(-noise.mu * clean.pixels[i]);
    const double counts = std::max<double>(1.0, static_cast<double>(rng.poisson(expected)));
    double v = -std::log(counts / noise.photon_count) / noise.mu;
    if (noise.gaussian_sigma > 0.0) v += noise.gaussian_sigma * rng.normal();
    out.pixels[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

}  // namespace rldn
