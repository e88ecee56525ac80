#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rldn/policy.hpp"
#include "rldn/random.hpp"
#include "rldn/tensor.hpp"

namespace rldn {

class TensorArchive;

/// PPO hyperparameters. `learning_rate`, `entropy_coef` and `value_coef` are
/// also the knobs the AdjustPpo action moves at run time.
struct PPOControl {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_epsilon = 0.2;
  double learning_rate = 1e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  std::size_t rollout_horizon = 64;
  std::size_t update_epochs = 4;
  std::size_t minibatch = 16;
  bool use_gae = true;

  static constexpr double kMinLearningRate = 1e-6;
  static constexpr double kMaxLearningRate = 1e-3;

  /// Throws ArgumentError when a field is outside its valid range.
  void validate() const;

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);
};

struct Transition {
  std::vector<double> state;
  Action action = Action::kSkip;
  double reward = 0.0;
  double value = 0.0;
  double log_prob = 0.0;
  bool done = false;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t)
/// A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
/// returns = A + V. `bootstrap` is V(s_T) after the last transition; a
/// missing value raises UsageError.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, std::optional<double> bootstrap, double gamma,
                      double lambda);

class RolloutBuffer {
 public:
  void add(Transition t);
  void clear();
  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  const std::vector<Transition>& transitions() const { return transitions_; }

  void set_bootstrap(double value) { bootstrap_ = value; }
  /// Fills advantages and returns. Without GAE the advantage is the
  /// discounted Monte-Carlo return minus the value (lambda = 1).
  void compute_advantages(double gamma, double lambda, bool use_gae = true);
  bool has_advantages() const { return !advantages_.empty() && advantages_.size() == size(); }
  const std::vector<double>& advantages() const { return advantages_; }
  const std::vector<double>& returns() const { return returns_; }

  void save(TensorArchive& archive, const std::string& prefix, std::size_t state_dim) const;
  void load(const TensorArchive& archive, const std::string& prefix);

 private:
  std::vector<Transition> transitions_;
  std::optional<double> bootstrap_;
  std::vector<double> advantages_;
  std::vector<double> returns_;
};

/// min(r * A, clip(r, 1 - eps, 1 + eps) * A), elementwise.
Tensor clipped_surrogate(const Tensor& ratio, const Tensor& advantages, double clip_epsilon);

struct PPOLoss {
  Tensor total;  // policy_loss + value_coef * value_loss - entropy_coef * entropy
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

/// Loss over the transitions selected by `index` (all when empty), with the
/// given (already normalized) advantages.
PPOLoss ppo_loss(const PolicyNet& policy, const RolloutBuffer& buffer,
                 std::span<const double> advantages, std::span<const std::size_t> index,
                 const PPOControl& control);

/// Zero mean, unit standard deviation (epsilon 1e-8).
std::vector<double> normalize_advantages(std::span<const double> advantages);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double total_loss = 0.0;
  std::size_t minibatches = 0;
  double learning_rate = 0.0;
};

/// Clipped-surrogate update: `update_epochs` passes over shuffled
/// minibatches, one AdamW step each. The buffer must hold exactly
/// `rollout_horizon` transitions with advantages computed. Throws
/// NumericError (without stepping) if a minibatch loss is not finite.
UpdateStats ppo_update(PolicyNet& policy, const RolloutBuffer& buffer, const PPOControl& control, Rng& rng);

}  // namespace rldn
