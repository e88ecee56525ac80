#include "rldn/environment.hpp"

#include <cmath>

#include "rldn/archive.hpp"
#include "rldn/errors.hpp"
#include "rldn/ppo.hpp"

namespace rldn {

std::vector<double> featurize(const Image& current, int step_index, int max_steps, double last_reward) {
  if (current.height % kStateSide != 0 || current.width % kStateSide != 0) {
    throw DimensionError("featurize: image extents must be multiples of 32");
  }
  Image small = downsample_area(current, kStateSide, kStateSide);
  std::vector<double> out = std::move(small.pixels);
  out.push_back(max_steps > 0 ? static_cast<double>(step_index) / max_steps : 0.0);
  out.push_back(last_reward / metrics::kRewardMax);
  return out;
}

DenoiseEnv::DenoiseEnv(EnvOptions options) : options_(options) {
  if (options_.max_steps <= 0) throw ArgumentError("max_steps must be positive");
  if (options_.multi_passes <= 0) throw ArgumentError("multi_passes must be positive");
  if (options_.reward_window == 0) throw ArgumentError("reward_window must be positive");
}

std::vector<double> DenoiseEnv::reset(const Image& low, const Image& high) {
  require_same_shape(low, high, "DenoiseEnv::reset");
  for (const Image* img : {&low, &high}) {
    for (double v : img->pixels) {
      if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("DenoiseEnv::reset: pixel values must lie in [0, 1]");
    }
  }
  state_.low = low;
  state_.high = high;
  state_.current = low;
  state_.step_index = 0;
  state_.max_steps = options_.max_steps;
  state_.last_reward = 0.0;
  active_ = true;
  return featurize(state_.current, 0, state_.max_steps, 0.0);
}

void DenoiseEnv::adjust_control(PPOControl& control) const {
  double stddev = 0.0;
  if (recent_.size() >= 2) {
    double mean = 0.0;
    for (double r : recent_) mean += r;
    mean /= static_cast<double>(recent_.size());
    double var = 0.0;
    for (double r : recent_) var += (r - mean) * (r - mean);
    stddev = std::sqrt(var / static_cast<double>(recent_.size()));
  }
  if (stddev > 5.0) {
    control.learning_rate = std::max(control.learning_rate / 2.0, PPOControl::kMinLearningRate);
    control.value_coef = std::min(control.value_coef * 1.25, 1.0);
  } else {
    control.learning_rate = std::min(control.learning_rate * 1.1, PPOControl::kMaxLearningRate);
    control.entropy_coef = std::max(control.entropy_coef * 0.9, 1e-4);
  }
}

StepResult DenoiseEnv::step(Action action, EDNet& model, PPOControl& control) {
  if (!active_) throw UsageError("DenoiseEnv::step before reset");
  if (done()) throw UsageError("DenoiseEnv::step on a finished episode");

  StepResult result;
  result.info.action = action;
  switch (action) {
    case Action::kApplyOnce:
      state_.current = model.denoise(state_.current);
      break;
    case Action::kApplyMulti:
      for (int i = 0; i < options_.multi_passes; ++i) state_.current = model.denoise(state_.current);
      break;
    case Action::kFineTune:
      if (!options_.inference) {
        try {
          result.info.fine_tune_loss = model.fine_tune_step(state_.low, state_.high);
        } catch (const NumericError&) {
          result.info.numeric_abort = true;
        }
      }
      state_.current = model.denoise(state_.low);
      break;
    case Action::kSkip:
      break;
    case Action::kAdjustPpo:
      if (!options_.inference) adjust_control(control);
      state_.current = model.denoise(state_.low);
      break;
  }

  result.info.quality = metrics::assess(state_.current, state_.high, options_.reward);
  result.reward = result.info.quality.reward;
  state_.last_reward = result.reward;
  state_.step_index += 1;
  result.done = done();
  result.next_state = featurize(state_.current, state_.step_index, state_.max_steps, state_.last_reward);

  recent_.push_back(result.reward);
  while (recent_.size() > options_.reward_window) recent_.pop_front();
  return result;
}

void DenoiseEnv::save(TensorArchive& archive, const std::string& prefix) const {
  archive.put_scalar(prefix + "window_size", static_cast<double>(recent_.size()));
  if (!recent_.empty()) {
    archive.put(prefix + "recent_rewards",
                Tensor::from({recent_.size()}, std::vector<double>(recent_.begin(), recent_.end())));
  }
}

void DenoiseEnv::load(const TensorArchive& archive, const std::string& prefix) {
  recent_.clear();
  const auto n = static_cast<std::size_t>(archive.get_scalar(prefix + "window_size"));
  if (n == 0) return;
  const Tensor& t = archive.get(prefix + "recent_rewards");
  if (t.numel() != n) throw FormatError("environment reward window has the wrong length");
  recent_.assign(t.data().begin(), t.data().end());
}

}  // namespace rldn
