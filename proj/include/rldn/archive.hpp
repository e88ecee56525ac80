#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rldn/tensor.hpp"

namespace rldn {

/// Ordered set of named f64 tensors with a bit-exact binary encoding.
///
/// Layout (all integers little-endian):
///
///   "EDNT"                 4-byte magic
///   u16 version            currently 1
///   u32 section_count
///   per section:
///     u32 name_length, UTF-8 name bytes
///     u8  dtype            1 = f64
///     u32 rank
///     u64 dims[rank]
///     f64 payload[prod(dims)], row-major
///
/// Checkpoints and image files use the same container.
class TensorArchive {
 public:
  static constexpr char kMagic[4] = {'E', 'D', 'N', 'T'};
  static constexpr std::uint16_t kVersion = 1;
  static constexpr std::uint8_t kDtypeF64 = 1;

  /// Stores a detached copy. Replaces an existing section of the same name.
  void put(const std::string& name, const Tensor& tensor);
  void put_scalar(const std::string& name, double value);
  /// Stores arbitrary bytes, one per element.
  void put_bytes(const std::string& name, std::string_view bytes);

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  std::string get_bytes(const std::string& name) const;
  /// Copies the stored values into `dst`, which must have the same shape.
  void copy_into(const std::string& name, Tensor& dst) const;

  const std::vector<std::pair<std::string, Tensor>>& sections() const { return sections_; }
  std::size_t size() const { return sections_.size(); }

  std::string serialize() const;
  static TensorArchive deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, Tensor>> sections_;
};

}  // namespace rldn
