#pragma once

#include <cstddef>
#include <vector>

#include "rldn/tensor.hpp"

namespace rldn {

/// Single-channel intensity grid, row-major, nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  std::size_t size() const { return pixels.size(); }
  double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }

  bool operator==(const Image&) const = default;
};

/// [1, H, W] tensor holding a copy of the pixels.
Tensor to_tensor(const Image& image);
/// Accepts [H, W] or [1, H, W].
Image from_tensor(const Tensor& t);

/// Area-average downsampling to `out_h` x `out_w`; extents must divide.
Image downsample_area(const Image& image, std::size_t out_h, std::size_t out_w);

void require_same_shape(const Image& a, const Image& b, const char* what);

}  // namespace rldn
