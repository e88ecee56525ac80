#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rldn/image.hpp"
#include "rldn/phantom.hpp"

namespace rldn {

struct DatasetSpec {
  std::size_t count = 100;
  std::size_t size = 32;
  NoiseModel noise;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  std::uint64_t seed = 0;
  std::string split;  // "train" or "test"
  Image low;
  Image high;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// floor(0.8 * count) training samples; the rest are held out.
std::size_t train_split_size(std::size_t count);

/// Phantom seed of sample `index`.
std::uint64_t sample_seed(std::uint64_t base_seed, std::size_t index);

/// Clean phantom (3-8 ellipses) and its low-dose counterpart, both a pure
/// function of the seed.
Sample make_sample(std::uint64_t seed, std::size_t size, const NoiseModel& noise);

/// Generates the whole set in memory, in parallel over RLDN_THREADS workers.
Dataset make_dataset(const DatasetSpec& spec);

/// Writes pair_NNNNN.ednt files, manifest.csv (seed,split,path) and
/// dataset.json into `dir`. Returns the in-memory dataset.
Dataset write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);

/// Reads a directory written by write_dataset.
Dataset load_dataset(const std::filesystem::path& dir);

/// .ednt pair files hold "low" and "high" sections of shape [1, S, S].
void save_pair(const std::filesystem::path& path, const Image& low, const Image& high);
void load_pair(const std::filesystem::path& path, Image& low, Image& high);

/// Single-image .ednt files hold an "image" section [1, H, W]; load_image
/// also accepts a pair file and returns its "low" image.
void save_image(const std::filesystem::path& path, const Image& image);
Image load_image(const std::filesystem::path& path);

/// RLDN_THREADS if set and positive, otherwise the hardware concurrency.
unsigned worker_threads();

}  // namespace rldn
