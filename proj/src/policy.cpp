#include "rldn/policy.hpp"

#include <algorithm>
#include <cmath>

#include "rldn/archive.hpp"
#include "rldn/ednet.hpp"
#include "rldn/errors.hpp"
#include "rldn/ops.hpp"

namespace rldn {

namespace {

// Added to the logits of masked actions; exp() of it underflows to zero.
constexpr double kMaskedLogit = -1e9;

// The actor head starts near zero so the first rollouts explore all actions
// instead of following whatever the random trunk happens to prefer.
constexpr double kActorInitScale = 0.01;

PolicyNet::Layer make_layer(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  return {Tensor::from({out, in}, std::move(w), true), Tensor::zeros({out}, true)};
}

}  // namespace

const char* action_name(Action action) {
  switch (action) {
    case Action::kApplyOnce:
      return "apply_once";
    case Action::kApplyMulti:
      return "apply_multi";
    case Action::kFineTune:
      return "fine_tune";
    case Action::kSkip:
      return "skip";
    case Action::kAdjustPpo:
      return "adjust_ppo";
  }
  return "?";
}

Action action_from_int(int value) {
  if (value < 0 || value >= kNumActions) throw ArgumentError("action id out of range: " + std::to_string(value));
  return static_cast<Action>(value);
}

PolicyNet::PolicyNet(PolicyOptions options, std::uint64_t seed) : options_(options) {
  if (options_.state_dim == 0) throw ArgumentError("PolicyNet: state_dim must be positive");
  Rng rng(seed);
  trunk1_ = make_layer(options_.state_dim, options_.hidden1, rng);
  trunk2_ = make_layer(options_.hidden1, options_.hidden2, rng);
  actor_ = make_layer(options_.hidden2, kNumActions, rng);
  for (double& v : actor_.weight.mutable_data()) v *= kActorInitScale;
  critic_ = make_layer(options_.hidden2, 1, rng);
  optimizer_ = AdamW(parameters(), AdamWOptions{.learning_rate = options_.learning_rate,
                                                .weight_decay = options_.weight_decay});
}

PolicyNet::Heads PolicyNet::forward(const Tensor& states) const {
  if (states.dim() != 2 || states.size(1) != options_.state_dim) {
    throw DimensionError("PolicyNet: expected states [N," + std::to_string(options_.state_dim) +
                         "], got " + shape_str(states.shape()));
  }
  const std::size_t n = states.size(0);
  Tensor h = ops::relu(ops::linear(states, trunk1_.weight, trunk1_.bias));
  h = ops::relu(ops::linear(h, trunk2_.weight, trunk2_.bias));
  Tensor logits = ops::linear(h, actor_.weight, actor_.bias);
  if (mask_ != kAllActions) {
    std::vector<double> offsets(n * kNumActions, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (int a = 0; a < kNumActions; ++a) {
        if (!mask_[a]) offsets[r * kNumActions + a] = kMaskedLogit;
      }
    }
    logits = ops::add(logits, Tensor::from({n, kNumActions}, std::move(offsets)));
  }
  Tensor values = ops::reshape(ops::linear(h, critic_.weight, critic_.bias), {n});
  return {ops::log_softmax(logits), values};
}

Tensor PolicyNet::state_tensor(std::span<const double> state) const {
  if (state.size() != options_.state_dim) {
    throw DimensionError("PolicyNet: state has " + std::to_string(state.size()) + " entries, expected " +
                         std::to_string(options_.state_dim));
  }
  if (!all_finite(state)) throw NumericError("PolicyNet: non-finite state");
  return Tensor::from({1, options_.state_dim}, std::vector<double>(state.begin(), state.end()));
}

std::array<double, kNumActions> PolicyNet::probabilities(std::span<const double> state) const {
  NoGradGuard no_grad;
  const Heads heads = forward(state_tensor(state));
  std::array<double, kNumActions> p{};
  for (int a = 0; a < kNumActions; ++a) p[a] = std::exp(heads.log_probs[a]);
  return p;
}

PolicyNet::Sample PolicyNet::act(std::span<const double> state, Rng& rng) const {
  NoGradGuard no_grad;
  const Heads heads = forward(state_tensor(state));
  const double u = rng.uniform();
  double cumulative = 0.0;
  int pick = -1;
  for (int a = 0; a < kNumActions; ++a) {
    const double p = std::exp(heads.log_probs[a]);
    if (p <= 0.0) continue;
    pick = a;  // last allowed action absorbs rounding in the tail
    cumulative += p;
    if (u < cumulative) break;
  }
  if (pick < 0) throw NumericError("PolicyNet: no action has positive probability");
  return {static_cast<Action>(pick), heads.log_probs[pick], heads.values[0]};
}

PolicyNet::Sample PolicyNet::greedy(std::span<const double> state) const {
  NoGradGuard no_grad;
  const Heads heads = forward(state_tensor(state));
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (heads.log_probs[a] > heads.log_probs[best]) best = a;
  }
  return {static_cast<Action>(best), heads.log_probs[best], heads.values[0]};
}

PolicyNet::Evaluation PolicyNet::evaluate(const Tensor& states, std::span<const int> actions) const {
  if (states.dim() != 2 || states.size(0) != actions.size()) {
    throw DimensionError("PolicyNet::evaluate: " + std::to_string(actions.size()) +
                         " actions for states " + shape_str(states.shape()));
  }
  if (!all_finite(states.data())) throw NumericError("PolicyNet::evaluate: non-finite states");
  Heads heads = forward(states);
  Tensor picked = ops::gather_rows(heads.log_probs, actions);
  // H = -sum_a p log p per row, averaged over the batch.
  Tensor plogp = ops::mul(ops::exp(heads.log_probs), heads.log_probs);
  Tensor entropy = ops::scale(ops::mean(ops::sum_rows(plogp)), -1.0);
  return {picked, heads.values, entropy};
}

void PolicyNet::set_action_mask(const ActionMask& mask) {
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw ArgumentError("PolicyNet: action mask must allow at least one action");
  }
  mask_ = mask;
}

std::vector<Tensor> PolicyNet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> PolicyNet::named_parameters() const {
  return {{"trunk1.weight", trunk1_.weight}, {"trunk1.bias", trunk1_.bias},
          {"trunk2.weight", trunk2_.weight}, {"trunk2.bias", trunk2_.bias},
          {"actor.weight", actor_.weight},   {"actor.bias", actor_.bias},
          {"critic.weight", critic_.weight}, {"critic.bias", critic_.bias}};
}

std::size_t PolicyNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

std::uint64_t PolicyNet::state_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : named_parameters()) h = fnv1a(t.data().data(), t.numel() * sizeof(double), h);
  return h;
}

void PolicyNet::save(TensorArchive& archive, const std::string& prefix) const {
  archive.put_scalar(prefix + "state_dim", static_cast<double>(options_.state_dim));
  std::vector<double> mask(kNumActions);
  for (int a = 0; a < kNumActions; ++a) mask[a] = mask_[a] ? 1.0 : 0.0;
  archive.put(prefix + "action_mask", Tensor::from({kNumActions}, mask));
  for (const auto& [name, t] : named_parameters()) archive.put(prefix + name, t);
  optimizer_.save(archive, prefix + "adamw.");
}

void PolicyNet::load(const TensorArchive& archive, const std::string& prefix) {
  const auto dim = static_cast<std::size_t>(archive.get_scalar(prefix + "state_dim"));
  if (dim != options_.state_dim) {
    throw FormatError("checkpoint policy state_dim " + std::to_string(dim) + " does not match " +
                      std::to_string(options_.state_dim));
  }
  const Tensor& mask = archive.get(prefix + "action_mask");
  if (mask.numel() != kNumActions) throw FormatError("bad action mask in checkpoint");
  ActionMask m{};
  for (int a = 0; a < kNumActions; ++a) m[a] = mask[a] != 0.0;
  set_action_mask(m);
  for (auto& [name, t] : named_parameters()) archive.copy_into(prefix + name, t);
  optimizer_.load(archive, prefix + "adamw.");
}

}  // namespace rldn
