#include "rldn/image.hpp"

#include <string>

#include "rldn/errors.hpp"

namespace rldn {

Tensor to_tensor(const Image& image) {
  if (image.height == 0 || image.width == 0 || image.size() != image.height * image.width) {
    throw DimensionError("to_tensor: malformed image");
  }
  return Tensor::from({1, image.height, image.width}, image.pixels);
}

Image from_tensor(const Tensor& t) {
  const Shape& s = t.shape();
  Image image;
  if (s.size() == 2) {
    image.height = s[0];
    image.width = s[1];
  } else if (s.size() == 3 && s[0] == 1) {
    image.height = s[1];
    image.width = s[2];
  } else {
    throw DimensionError("from_tensor: expected [H,W] or [1,H,W], got " + shape_str(s));
  }
  image.pixels = t.values();
  return image;
}

Image downsample_area(const Image& image, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || image.height % out_h != 0 || image.width % out_w != 0) {
    throw DimensionError("downsample_area: " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " does not divide into " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const std::size_t fh = image.height / out_h, fw = image.width / out_w;
  if (fh == 1 && fw == 1) return image;
  Image out(out_h, out_w);
  const double inv = 1.0 / static_cast<double>(fh * fw);
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < fh; ++i) {
        for (std::size_t j = 0; j < fw; ++j) s += image.at(r * fh + i, c * fw + j);
      }
      out.at(r, c) = s * inv;
    }
  }
  return out;
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": image shapes differ (" + std::to_string(a.height) +
                         "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
}

}  // namespace rldn
