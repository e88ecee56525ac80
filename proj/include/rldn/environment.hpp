#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "rldn/ednet.hpp"
#include "rldn/image.hpp"
#include "rldn/metrics.hpp"
#include "rldn/policy.hpp"

namespace rldn {

struct PPOControl;
class TensorArchive;

/// Side length of the downsampled image inside the policy state.
inline constexpr std::size_t kStateSide = 32;
inline constexpr std::size_t kStateDim = kStateSide * kStateSide + 2;

/// Policy input: the current image area-averaged to 32x32 and flattened,
/// followed by step_index / max_steps and last_reward / 100.
std::vector<double> featurize(const Image& current, int step_index, int max_steps, double last_reward);

struct EnvOptions {
  int max_steps = 8;
  int multi_passes = 3;  // ApplyMulti iterations
  metrics::RewardOptions reward;
  /// Evaluation rollouts: FineTune and AdjustPpo reduce to a plain denoising
  /// pass of the low-dose input, nothing is trained or adjusted.
  bool inference = false;
  std::size_t reward_window = 10;
};

struct EnvState {
  Image current;
  Image low;
  Image high;
  int step_index = 0;
  int max_steps = 8;
  double last_reward = 0.0;
};

struct StepInfo {
  Action action = Action::kSkip;
  metrics::QualityReport quality;
  /// Loss before the fine-tune update (action 2 only).
  double fine_tune_loss = 0.0;
  /// Set when an update inside the step hit a numeric error and was aborted.
  bool numeric_abort = false;
};

struct StepResult {
  std::vector<double> next_state;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// Gym-style denoising environment over one noisy/clean pair per episode.
class DenoiseEnv {
 public:
  explicit DenoiseEnv(EnvOptions options = {});

  /// Starts an episode on (low, high); returns the initial state vector.
  std::vector<double> reset(const Image& low, const Image& high);

  /// Executes one action. Throws UsageError once the episode is done.
  StepResult step(Action action, EDNet& model, PPOControl& control);

  const EnvState& state() const { return state_; }
  const EnvOptions& options() const { return options_; }
  bool done() const { return state_.step_index >= state_.max_steps; }
  bool active() const { return active_; }

  /// Rewards of the most recent steps across episodes (newest last).
  const std::deque<double>& recent_rewards() const { return recent_; }

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  void adjust_control(PPOControl& control) const;

  EnvOptions options_;
  EnvState state_;
  std::deque<double> recent_;
  bool active_ = false;
};

}  // namespace rldn
