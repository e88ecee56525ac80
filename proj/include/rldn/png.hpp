#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rldn/image.hpp"

namespace rldn {

/// 8-bit grayscale PNG bytes; pixels are clamped to [0, 1] and rounded.
std::string encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

/// Images side by side with a 2-pixel white gutter (e.g. noisy | denoised | clean).
Image hstack(const std::vector<Image>& images);

}  // namespace rldn
