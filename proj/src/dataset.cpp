#include "rldn/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rldn/archive.hpp"
#include "rldn/errors.hpp"

namespace rldn {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShapeTag = 1;
constexpr std::uint64_t kNoiseTag = 2;

std::string pair_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%05zu.ednt", index);
  return buf;
}

}  // namespace

void DatasetSpec::validate() const {
  if (count == 0) throw ArgumentError("dataset count must be positive");
  if (size == 0 || size % 4 != 0) throw ArgumentError("image size must be a positive multiple of 4");
  if (size != 32 && size != 64 && size != 128) throw ArgumentError("image size must be 32, 64 or 128");
  noise.validate();
}

std::size_t train_split_size(std::size_t count) { return count * 4 / 5; }

std::uint64_t sample_seed(std::uint64_t base_seed, std::size_t index) { return mix_seed(base_seed, index); }

Sample make_sample(std::uint64_t seed, std::size_t size, const NoiseModel& noise) {
  PhantomSpec spec;
  spec.size = size;
  spec.seed = seed;
  Rng shape_rng(mix_seed(seed, kShapeTag));
  spec.n_ellipses = 3 + static_cast<int>(shape_rng.below(6));
  Sample s;
  s.seed = seed;
  s.high = generate_phantom(spec);
  Rng noise_rng(mix_seed(seed, kNoiseTag));
  s.low = add_low_dose_noise(s.high, noise, noise_rng);
  return s;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("RLDN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Dataset make_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Sample> all(spec.count);
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < spec.count; ++i) {
    if (!seeds.insert(sample_seed(spec.seed, i)).second) throw ArgumentError("sample seed collision");
  }
  const unsigned workers = std::min<unsigned>(worker_threads(), static_cast<unsigned>(spec.count));
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < spec.count; i += workers) all[i] = make_sample(sample_seed(spec.seed, i), spec.size, spec.noise);
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  Dataset ds;
  const std::size_t n_train = train_split_size(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    all[i].split = i < n_train ? "train" : "test";
    (i < n_train ? ds.train : ds.test).push_back(std::move(all[i]));
  }
  return ds;
}

void save_pair(const fs::path& path, const Image& low, const Image& high) {
  require_same_shape(low, high, "save_pair");
  TensorArchive ar;
  ar.put("low", to_tensor(low));
  ar.put("high", to_tensor(high));
  ar.save(path);
}

void load_pair(const fs::path& path, Image& low, Image& high) {
  const TensorArchive ar = TensorArchive::load(path);
  if (!ar.contains("low") || !ar.contains("high")) throw FormatError(path.string() + ": not an image pair");
  low = from_tensor(ar.get("low"));
  high = from_tensor(ar.get("high"));
  if (low.height != high.height || low.width != high.width) throw FormatError(path.string() + ": pair shapes differ");
}

void save_image(const fs::path& path, const Image& image) {
  TensorArchive ar;
  ar.put("image", to_tensor(image));
  ar.save(path);
}

Image load_image(const fs::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  for (const char* name : {"image", "low"}) {
    if (ar.contains(name)) {
      try {
        return from_tensor(ar.get(name));
      } catch (const DimensionError& e) {
        throw FormatError(path.string() + ": " + e.what());
      }
    }
  }
  throw FormatError(path.string() + ": no image section");
}

Dataset write_dataset(const fs::path& dir, const DatasetSpec& spec) {
  Dataset ds = make_dataset(spec);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create directory " + dir.string());

  std::ostringstream manifest;
  manifest << "seed,split,path\n";
  std::size_t index = 0;
  for (const auto* part : {&ds.train, &ds.test}) {
    for (const Sample& s : *part) {
      const std::string name = pair_name(index++);
      save_pair(dir / name, s.low, s.high);
      manifest << s.seed << ',' << s.split << ',' << name << '\n';
    }
  }
  std::ofstream(dir / "manifest.csv") << manifest.str();

  nlohmann::ordered_json meta;
  meta["count"] = spec.count;
  meta["size"] = spec.size;
  meta["seed"] = spec.seed;
  meta["photon_count"] = spec.noise.photon_count;
  meta["gaussian_sigma"] = spec.noise.gaussian_sigma;
  meta["mu"] = spec.noise.mu;
  meta["train"] = ds.train.size();
  meta["test"] = ds.test.size();
  std::ofstream meta_file(dir / "dataset.json");
  meta_file << meta.dump(2) << '\n';
  if (!meta_file) throw Error("cannot write " + (dir / "dataset.json").string());
  return ds;
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.csv");
  if (!in) throw FormatError("missing manifest.csv in " + dir.string());
  std::string line;
  if (!std::getline(in, line) || line != "seed,split,path") throw FormatError("bad manifest header in " + dir.string());
  Dataset ds;
  std::set<std::uint64_t> train_seeds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string seed, split, path;
    if (!std::getline(row, seed, ',') || !std::getline(row, split, ',') || !std::getline(row, path)) {
      throw FormatError("bad manifest row: " + line);
    }
    Sample s;
    try {
      s.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw FormatError("bad seed in manifest row: " + line);
    }
    s.split = split;
    load_pair(dir / path, s.low, s.high);
    if (split == "train") {
      train_seeds.insert(s.seed);
      ds.train.push_back(std::move(s));
    } else if (split == "test") {
      ds.test.push_back(std::move(s));
    } else {
      throw FormatError("unknown split '" + split + "' in manifest");
    }
  }
  for (const Sample& s : ds.test) {
    if (train_seeds.count(s.seed)) throw FormatError("seed " + std::to_string(s.seed) + " is in both splits");
  }
  return ds;
}

}  // namespace rldn
