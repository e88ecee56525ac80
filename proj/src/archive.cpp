#include "rldn/archive.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "rldn/errors.hpp"

namespace rldn {

namespace {

constexpr std::uint32_t kMaxRank = 16;

template <typename T>
void write_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T read(const char* what) {
    need(sizeof(T), what);
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) throw FormatError(std::string("truncated container while reading ") + what);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorArchive::put(const std::string& name, const Tensor& tensor) {
  if (!tensor.defined()) throw UsageError("TensorArchive::put: undefined tensor '" + name + "'");
  Tensor copy = tensor.detach();
  for (auto& [key, value] : sections_) {
    if (key == name) {
      value = std::move(copy);
      return;
    }
  }
  sections_.emplace_back(name, std::move(copy));
}

void TensorArchive::put_scalar(const std::string& name, double value) {
  put(name, Tensor::scalar(value));
}

void TensorArchive::put_bytes(const std::string& name, std::string_view bytes) {
  std::vector<double> values(bytes.size());
  std::transform(bytes.begin(), bytes.end(), values.begin(),
                 [](char c) { return static_cast<double>(static_cast<unsigned char>(c)); });
  if (values.empty()) values.push_back(-1.0);  // marker for an empty string
  const std::size_t n = values.size();
  put(name, Tensor::from({n}, std::move(values)));
}

bool TensorArchive::contains(const std::string& name) const {
  return std::any_of(sections_.begin(), sections_.end(),
                     [&](const auto& s) { return s.first == name; });
}

const Tensor& TensorArchive::get(const std::string& name) const {
  for (const auto& [key, value] : sections_) {
    if (key == name) return value;
  }
  throw FormatError("missing section '" + name + "'");
}

double TensorArchive::get_scalar(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.numel() != 1) throw FormatError("section '" + name + "' is not a scalar");
  return t[0];
}

std::string TensorArchive::get_bytes(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.numel() == 1 && t[0] == -1.0) return {};
  std::string out;
  out.reserve(t.numel());
  for (double v : t.data()) {
    if (v < 0.0 || v > 255.0 || v != static_cast<double>(static_cast<int>(v))) {
      throw FormatError("section '" + name + "' does not hold bytes");
    }
    out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return out;
}

void TensorArchive::copy_into(const std::string& name, Tensor& dst) const {
  const Tensor& src = get(name);
  if (src.shape() != dst.shape()) {
    throw FormatError("section '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                      shape_str(dst.shape()));
  }
  std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
}

std::string TensorArchive::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  write_le<std::uint16_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sections_.size()));
  for (const auto& [name, tensor] : sections_) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    write_le<std::uint8_t>(out, kDtypeF64);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dim()));
    for (std::size_t extent : tensor.shape()) write_le<std::uint64_t>(out, extent);
    for (double v : tensor.data()) write_le<double>(out, v);
  }
  return out;
}

TensorArchive TensorArchive::deserialize(std::string_view bytes) {
  Reader in(bytes);
  const std::string_view magic = in.take(sizeof(kMagic), "magic");
  if (magic != std::string_view(kMagic, sizeof(kMagic))) throw FormatError("bad magic bytes, not an EDNT container");
  const auto version = in.read<std::uint16_t>("version");
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));
  const auto count = in.read<std::uint32_t>("section count");

  TensorArchive archive;
  for (std::uint32_t s = 0; s < count; ++s) {
    const auto name_len = in.read<std::uint32_t>("name length");
    std::string name(in.take(name_len, "name"));
    const auto dtype = in.read<std::uint8_t>("dtype");
    if (dtype != kDtypeF64) throw FormatError("section '" + name + "': unsupported dtype " + std::to_string(dtype));
    const auto rank = in.read<std::uint32_t>("rank");
    if (rank == 0 || rank > kMaxRank) throw FormatError("section '" + name + "': bad rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t count_elems = 1;
    for (auto& extent : shape) {
      const auto d = in.read<std::uint64_t>("dims");
      if (d == 0) throw FormatError("section '" + name + "': zero extent");
      if (count_elems > std::numeric_limits<std::uint64_t>::max() / d) {
        throw FormatError("section '" + name + "': dimension overflow");
      }
      count_elems *= d;
      extent = static_cast<std::size_t>(d);
    }
    if (count_elems > in.remaining() / sizeof(double)) {
      throw FormatError("section '" + name + "': payload exceeds file size");
    }
    std::vector<double> values(static_cast<std::size_t>(count_elems));
    for (double& v : values) v = in.read<double>("payload");
    if (archive.contains(name)) throw FormatError("duplicate section '" + name + "'");
    archive.sections_.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after last section");
  return archive;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace rldn
