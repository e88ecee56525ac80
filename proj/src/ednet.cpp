#include "rldn/ednet.hpp"

#include <cmath>
#include <cstring>

#include "rldn/archive.hpp"
#include "rldn/errors.hpp"
#include "rldn/random.hpp"

namespace rldn {

namespace {

constexpr int kKernel = 3;
constexpr int kPadding = 1;

struct StageSpec {
  const char* name;
  bool transpose;
  int stride;
  bool norm_act;
  std::size_t in;   // 0 means "image channels"
  std::size_t out;  // 0 means "image channels"
};

constexpr StageSpec kLadder[] = {
    {"enc1", false, 1, true, 0, 64},
    {"enc2", false, 2, true, 64, 128},
    {"enc3", false, 2, true, 128, 256},
    {"bottleneck", false, 1, true, 256, 512},
    {"dec1", true, 2, true, 512, 128},
    {"dec2", true, 2, true, 128, 64},
    {"dec3", false, 1, true, 64, 64},
    {"out", false, 1, false, 64, 0},
};

constexpr double kOutputInitScale = 0.01;

enum Stage { kEnc1, kEnc2, kEnc3, kBottleneck, kDec1, kDec2, kDec3, kOut };

// Kaiming-uniform with fan-in, ReLU gain: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t hash) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Tensor ConvStage::apply(const Tensor& x, ops::NormMode mode) {
  Tensor y = transpose ? ops::conv_transpose2d(x, weight, bias, stride, kPadding, stride - 1)
                       : ops::conv2d(x, weight, bias, stride, kPadding);
  if (!norm_act) return y;
  return ops::relu(ops::batchnorm2d(y, gamma, beta, stats, mode));
}

EDNet::EDNet(EDNetOptions options, std::uint64_t seed) : options_(options) {
  if (options_.channels == 0) throw ArgumentError("EDNet: channels must be positive");
  Rng rng(seed);
  const std::size_t k = kKernel;
  for (const StageSpec& spec : kLadder) {
    ConvStage stage;
    stage.name = spec.name;
    stage.transpose = spec.transpose;
    stage.stride = spec.stride;
    stage.norm_act = spec.norm_act;
    const std::size_t in = spec.in ? spec.in : options_.channels;
    const std::size_t out = spec.out ? spec.out : options_.channels;
    if (spec.transpose) {
      stage.weight = kaiming_uniform({in, out, k, k}, out * k * k, rng);
    } else {
      stage.weight = kaiming_uniform({out, in, k, k}, in * k * k, rng);
    }
    if (!spec.norm_act) {
      // Near-zero output layer: the untrained network starts close to the
      // identity through the input shortcut instead of far outside [0, 1].
      for (double& v : stage.weight.mutable_data()) v *= kOutputInitScale;
    }
    stage.bias = Tensor::zeros({out}, true);
    if (spec.norm_act) {
      stage.gamma = Tensor::full({out}, 1.0, true);
      stage.beta = Tensor::zeros({out}, true);
      stage.stats = ops::BatchNormStats::fresh(out);
    }
    stages_.push_back(std::move(stage));
  }
  optimizer_ = AdamW(parameters(), AdamWOptions{.learning_rate = options_.learning_rate,
                                                .weight_decay = options_.weight_decay});
}

Tensor EDNet::forward(const Tensor& x, EDNetTrace* trace) {
  if (x.dim() != 3 || x.size(0) != options_.channels) {
    throw DimensionError("EDNet: expected input [" + std::to_string(options_.channels) +
                         ",H,W], got " + shape_str(x.shape()));
  }
  if (x.size(1) % 4 != 0 || x.size(2) % 4 != 0) {
    throw DimensionError("EDNet: spatial extents must be divisible by 4, got " + shape_str(x.shape()));
  }
  auto record = [trace](const ConvStage& s, const Tensor& t) {
    if (trace) trace->stages.emplace_back(s.name, t.shape());
  };
  auto skip = [this, trace](const Tensor& dec, const Tensor& enc) {
    if (!options_.skip_connections) return dec;
    if (trace) ++trace->skip_additions;
    return ops::add(dec, enc);
  };

  Tensor e1 = stages_[kEnc1].apply(x, mode_);
  record(stages_[kEnc1], e1);
  Tensor e2 = stages_[kEnc2].apply(e1, mode_);
  record(stages_[kEnc2], e2);
  Tensor e3 = stages_[kEnc3].apply(e2, mode_);
  record(stages_[kEnc3], e3);
  Tensor b = stages_[kBottleneck].apply(e3, mode_);
  record(stages_[kBottleneck], b);
  Tensor d1 = skip(stages_[kDec1].apply(b, mode_), e2);
  record(stages_[kDec1], d1);
  Tensor d2 = skip(stages_[kDec2].apply(d1, mode_), e1);
  record(stages_[kDec2], d2);
  Tensor d3 = skip(stages_[kDec3].apply(d2, mode_), e1);
  record(stages_[kDec3], d3);
  Tensor y = stages_[kOut].apply(d3, mode_);
  if (options_.input_shortcut) y = ops::add(y, x);
  record(stages_[kOut], y);
  return ops::clamp(y, 0.0, 1.0);
}

Image EDNet::denoise(const Image& image) {
  NoGradGuard no_grad;
  const ops::NormMode saved = mode_;
  mode_ = ops::NormMode::kEval;
  Image out = from_tensor(forward(to_tensor(image)));
  mode_ = saved;
  return out;
}

double EDNet::fine_tune_step(const Image& low, const Image& high, double learning_rate) {
  require_same_shape(low, high, "fine_tune_step");
  if (!(learning_rate >= 0.0)) throw ArgumentError("fine_tune_step: learning rate must be >= 0");
  const ops::NormMode saved = mode_;
  mode_ = ops::NormMode::kTrain;
  struct Restore {
    EDNet* self;
    ops::NormMode mode;
    ~Restore() { self->mode_ = mode; }
  } restore{this, saved};

  optimizer_.zero_grad();
  Tensor loss = ops::mse_loss(forward(to_tensor(low)), to_tensor(high));
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericError("fine_tune_step: non-finite loss; update aborted");
  loss.backward();
  optimizer_.options().learning_rate = learning_rate;
  optimizer_.step();
  return value;
}

std::vector<Tensor> EDNet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> EDNet::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const ConvStage& s : stages_) {
    out.emplace_back(s.name + ".weight", s.weight);
    out.emplace_back(s.name + ".bias", s.bias);
    if (s.norm_act) {
      out.emplace_back(s.name + ".bn.gamma", s.gamma);
      out.emplace_back(s.name + ".bn.beta", s.beta);
    }
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> EDNet::named_buffers() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const ConvStage& s : stages_) {
    if (!s.norm_act) continue;
    out.emplace_back(s.name + ".bn.running_mean", s.stats.running_mean);
    out.emplace_back(s.name + ".bn.running_var", s.stats.running_var);
    out.emplace_back(s.name + ".bn.batches_tracked", s.stats.batches_tracked);
  }
  return out;
}

std::size_t EDNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

std::size_t EDNet::expected_parameter_count(std::size_t channels) {
  std::size_t n = 0;
  for (const StageSpec& spec : kLadder) {
    const std::size_t in = spec.in ? spec.in : channels;
    const std::size_t out = spec.out ? spec.out : channels;
    n += in * out * kKernel * kKernel + out;
    if (spec.norm_act) n += 2 * out;
  }
  return n;
}

std::string EDNet::architecture_signature() const {
  std::string sig = "ednet;C=" + std::to_string(options_.channels);
  for (const ConvStage& s : stages_) {
    sig += ";" + s.name + (s.transpose ? ":convT" : ":conv") + shape_str(s.weight.shape()) +
           "/s" + std::to_string(s.stride) + (s.norm_act ? "+bn+relu" : "");
  }
  sig += options_.skip_connections ? ";skips=dec1+enc2,dec2+enc1,dec3+enc1" : ";skips=none";
  sig += options_.input_shortcut ? ";out+=input" : "";
  return sig;
}

std::uint64_t EDNet::architecture_checksum() const {
  const std::string sig = architecture_signature();
  return fnv1a(sig.data(), sig.size());
}

std::uint64_t EDNet::state_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : named_parameters()) h = fnv1a(t.data().data(), t.numel() * sizeof(double), h);
  for (const auto& [name, t] : named_buffers()) h = fnv1a(t.data().data(), t.numel() * sizeof(double), h);
  return h;
}

void EDNet::save(TensorArchive& archive, const std::string& prefix) const {
  archive.put_scalar(prefix + "channels", static_cast<double>(options_.channels));
  archive.put_scalar(prefix + "skip_connections", options_.skip_connections ? 1.0 : 0.0);
  archive.put_scalar(prefix + "input_shortcut", options_.input_shortcut ? 1.0 : 0.0);
  for (const auto& [name, t] : named_parameters()) archive.put(prefix + name, t);
  for (const auto& [name, t] : named_buffers()) archive.put(prefix + name, t);
  optimizer_.save(archive, prefix + "adamw.");
}

void EDNet::load(const TensorArchive& archive, const std::string& prefix) {
  const auto channels = static_cast<std::size_t>(archive.get_scalar(prefix + "channels"));
  const bool skips = archive.get_scalar(prefix + "skip_connections") != 0.0;
  const bool shortcut = archive.get_scalar(prefix + "input_shortcut") != 0.0;
  if (channels != options_.channels || skips != options_.skip_connections || shortcut != options_.input_shortcut) {
    throw FormatError("checkpoint architecture (C=" + std::to_string(channels) + ", skips=" +
                      (skips ? "on" : "off") + ", shortcut=" + (shortcut ? "on" : "off") +
                      ") does not match the model");
  }
  for (auto& [name, t] : named_parameters()) archive.copy_into(prefix + name, t);
  for (auto& [name, t] : named_buffers()) archive.copy_into(prefix + name, t);
  optimizer_.load(archive, prefix + "adamw.");
}

EDNet EDNet::clone() const {
  TensorArchive snapshot;
  save(snapshot, "");
  EDNet copy(options_, 0);
  copy.load(snapshot, "");
  copy.mode_ = mode_;
  return copy;
}

}  // namespace rldn
