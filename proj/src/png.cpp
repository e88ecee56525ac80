#include "rldn/png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "rldn/errors.hpp"

namespace rldn {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_u32(out, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

std::string encode_png(const Image& image) {
  if (image.height == 0 || image.width == 0) throw ArgumentError("encode_png: empty image");
  std::string raw;
  raw.reserve(image.height * (image.width + 1));
  for (std::size_t r = 0; r < image.height; ++r) {
    raw.push_back('\0');  // filter: none
    for (std::size_t c = 0; c < image.width; ++c) {
      double v = image.at(r, c);
      if (!std::isfinite(v)) v = 0.0;
      raw.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw Error("encode_png: zlib compression failed");
  }
  packed.resize(len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit, grayscale, deflate, filter 0, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", "");
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  const std::string bytes = encode_png(image);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path.string());
}

Image hstack(const std::vector<Image>& images) {
  if (images.empty()) throw ArgumentError("hstack: no images");
  const std::size_t h = images.front().height;
  std::size_t w = 0;
  for (const Image& img : images) {
    if (img.height != h) throw DimensionError("hstack: heights differ");
    w += img.width;
  }
  constexpr std::size_t kGutter = 2;
  w += kGutter * (images.size() - 1);
  Image out(h, w, 1.0);
  std::size_t x0 = 0;
  for (const Image& img : images) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < img.width; ++c) out.at(r, x0 + c) = img.at(r, c);
    }
    x0 += img.width + kGutter;
  }
  return out;
}

}  // namespace rldn
