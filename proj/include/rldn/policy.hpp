#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rldn/adamw.hpp"
#include "rldn/random.hpp"
#include "rldn/tensor.hpp"

namespace rldn {

class TensorArchive;

/// The five denoising actions. Numbering is stable and used in logs and
/// checkpoints.
enum class Action : int {
  kApplyOnce = 0,
  kApplyMulti = 1,
  kFineTune = 2,
  kSkip = 3,
  kAdjustPpo = 4,
};

inline constexpr int kNumActions = 5;

const char* action_name(Action action);
Action action_from_int(int value);

/// Actions the policy is allowed to pick. Disallowed actions get zero
/// probability.
using ActionMask = std::array<bool, kNumActions>;
inline constexpr ActionMask kAllActions = {true, true, true, true, true};

struct PolicyOptions {
  std::size_t state_dim = 1026;
  std::size_t hidden1 = 256;
  std::size_t hidden2 = 128;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
};

/// Actor-critic MLP: shared trunk state -> 256 -> 128 (ReLU), a softmax
/// actor head over the five actions and a scalar critic head.
class PolicyNet {
 public:
  explicit PolicyNet(PolicyOptions options = {}, std::uint64_t seed = 0);
  PolicyNet(const PolicyNet&) = delete;
  PolicyNet& operator=(const PolicyNet&) = delete;
  PolicyNet(PolicyNet&&) = default;
  PolicyNet& operator=(PolicyNet&&) = default;

  struct Heads {
    Tensor log_probs;  // [N, 5]
    Tensor values;     // [N]
  };
  /// states: [N, state_dim]
  Heads forward(const Tensor& states) const;

  struct Sample {
    Action action;
    double log_prob;
    double value;
  };
  /// Samples an action from the categorical policy. Throws NumericError on a
  /// non-finite state.
  Sample act(std::span<const double> state, Rng& rng) const;
  /// Most probable action (lowest index on ties) with its log-prob and value.
  Sample greedy(std::span<const double> state) const;
  std::array<double, kNumActions> probabilities(std::span<const double> state) const;

  struct Evaluation {
    Tensor log_probs;  // [N] log pi(a_i | s_i)
    Tensor values;     // [N]
    Tensor entropy;    // scalar, mean categorical entropy
  };
  Evaluation evaluate(const Tensor& states, std::span<const int> actions) const;

  void set_action_mask(const ActionMask& mask);
  const ActionMask& action_mask() const { return mask_; }

  const PolicyOptions& options() const { return options_; }
  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
  std::uint64_t state_checksum() const;

  AdamW& optimizer() { return optimizer_; }
  const AdamW& optimizer() const { return optimizer_; }

  void save(TensorArchive& archive, const std::string& prefix) const;
  void load(const TensorArchive& archive, const std::string& prefix);

  struct Layer {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
  };
  Layer& trunk1() { return trunk1_; }
  Layer& trunk2() { return trunk2_; }
  Layer& actor() { return actor_; }
  Layer& critic() { return critic_; }

 private:
  Tensor state_tensor(std::span<const double> state) const;

  PolicyOptions options_;
  Layer trunk1_, trunk2_, actor_, critic_;
  ActionMask mask_ = kAllActions;
  AdamW optimizer_;
};

}  // namespace rldn
