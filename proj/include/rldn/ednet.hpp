#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rldn/adamw.hpp"
#include "rldn/image.hpp"
#include "rldn/ops.hpp"

namespace rldn {

class TensorArchive;

struct EDNetOptions {
  std::size_t channels = 1;
  bool skip_connections = true;
  /// Adds the input image to the output conv before the clamp, so the
  /// network predicts a correction to its input.
  bool input_shortcut = true;
  double learning_rate = 5e-5;
  double weight_decay = 1e-4;
};

/// One convolutional stage: conv (or transposed conv), then optionally
/// batch norm and ReLU.
struct ConvStage {
  std::string name;
  bool transpose = false;
  int stride = 1;
  bool norm_act = true;
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  ops::BatchNormStats stats;

  Tensor apply(const Tensor& x, ops::NormMode mode);
};

/// Optional record of the intermediate shapes of one forward pass.
struct EDNetTrace {
  std::vector<std::pair<std::string, Shape>> stages;
  int skip_additions = 0;
};

/// Encoder-bottleneck-decoder denoiser.
///
///   enc1        conv  C   -> 64,  stride 1      64  x H   x W
///   enc2        conv  64  -> 128, stride 2      128 x H/2 x W/2
///   enc3        conv  128 -> 256, stride 2      256 x H/4 x W/4
///   bottleneck  conv  256 -> 512, stride 1      512 x H/4 x W/4
///   dec1        convT 512 -> 128, stride 2      128 x H/2 x W/2  (+ enc2)
///   dec2        convT 128 -> 64,  stride 2      64  x H   x W    (+ enc1)
///   dec3        conv  64  -> 64,  stride 1      64  x H   x W    (+ enc1)
///   out         conv  64  -> C,   stride 1, no norm/activation, plus the
///               input image (input_shortcut), clamped to [0, 1]
///
/// Every stage except `out` is conv + batch norm + ReLU; skip features are
/// added after the activation. All kernels are 3x3 with padding 1, and
/// transposed convolutions use output padding 1 so they exactly double.
class EDNet {
 public:
  explicit EDNet(EDNetOptions options = {}, std::uint64_t seed = 0);
  EDNet(const EDNet&) = delete;
  EDNet& operator=(const EDNet&) = delete;
  EDNet(EDNet&&) = default;
  EDNet& operator=(EDNet&&) = default;

  /// x: [C, H, W] with H and W divisible by 4.
  Tensor forward(const Tensor& x, EDNetTrace* trace = nullptr);

  /// Eval-mode forward without graph recording.
  Image denoise(const Image& image);

  /// One AdamW step on mse(forward(low), high) with batch-norm in train
  /// mode. Returns the loss before the step. Throws NumericError (leaving
  /// parameters untouched) if the loss or any gradient is non-finite.
  double fine_tune_step(const Image& low, const Image& high, double learning_rate);
  double fine_tune_step(const Image& low, const Image& high) {
    return fine_tune_step(low, high, options_.learning_rate);
  }

  void set_mode(ops::NormMode mode) { mode_ = mode; }
  ops::NormMode mode() const { return mode_; }

  const EDNetOptions& options() const { return options_; }
  std::vector<ConvStage>& stages() { return stages_; }
  const std::vector<ConvStage>& stages() const { return stages_; }

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  /// Batch-norm running statistics.
  std::vector<std::pair<std::string, Tensor>> named_buffers() const;
  std::size_t parameter_count() const;
  /// Closed-form parameter count for `channels` image channels.
  static std::size_t expected_parameter_count(std::size_t channels);

  /// Text description of the layer ladder and skip wiring.
  std::string architecture_signature() const;
  std::uint64_t architecture_checksum() const;
  /// FNV-1a over the bits of every parameter and buffer.
  std::uint64_t state_checksum() const;

  AdamW& optimizer() { return optimizer_; }
  const AdamW& optimizer() const { return optimizer_; }

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

  /// Independent copy including optimizer state.
  EDNet clone() const;

 private:
  EDNetOptions options_;
  std::vector<ConvStage> stages_;
  ops::NormMode mode_ = ops::NormMode::kEval;
  AdamW optimizer_;
};

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace rldn
