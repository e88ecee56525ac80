#include "rldn/ppo.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "rldn/archive.hpp"
#include "rldn/errors.hpp"
#include "rldn/ops.hpp"

namespace rldn {

void PPOControl::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ArgumentError("gamma must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ArgumentError("lambda must lie in (0, 1]");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ArgumentError("clip_epsilon must lie in (0, 1)");
  if (!(learning_rate >= kMinLearningRate && learning_rate <= kMaxLearningRate)) {
    throw ArgumentError("ppo learning rate must lie in [1e-6, 1e-3]");
  }
  if (!(entropy_coef >= 0.0) || !(value_coef >= 0.0)) throw ArgumentError("loss coefficients must be >= 0");
  if (rollout_horizon == 0 || update_epochs == 0 || minibatch == 0) {
    throw ArgumentError("rollout_horizon, update_epochs and minibatch must be positive");
  }
}

void PPOControl::save(TensorArchive& archive, const std::string& prefix) const {
  archive.put_scalar(prefix + "gamma", gamma);
  archive.put_scalar(prefix + "lambda", lambda);
  archive.put_scalar(prefix + "clip_epsilon", clip_epsilon);
  archive.put_scalar(prefix + "learning_rate", learning_rate);
  archive.put_scalar(prefix + "entropy_coef", entropy_coef);
  archive.put_scalar(prefix + "value_coef", value_coef);
  archive.put_scalar(prefix + "rollout_horizon", static_cast<double>(rollout_horizon));
  archive.put_scalar(prefix + "update_epochs", static_cast<double>(update_epochs));
  archive.put_scalar(prefix + "minibatch", static_cast<double>(minibatch));
  archive.put_scalar(prefix + "use_gae", use_gae ? 1.0 : 0.0);
}

void PPOControl::load(const TensorArchive& archive, const std::string& prefix) {
  gamma = archive.get_scalar(prefix + "gamma");
  lambda = archive.get_scalar(prefix + "lambda");
  clip_epsilon = archive.get_scalar(prefix + "clip_epsilon");
  learning_rate = archive.get_scalar(prefix + "learning_rate");
  entropy_coef = archive.get_scalar(prefix + "entropy_coef");
  value_coef = archive.get_scalar(prefix + "value_coef");
  rollout_horizon = static_cast<std::size_t>(archive.get_scalar(prefix + "rollout_horizon"));
  update_epochs = static_cast<std::size_t>(archive.get_scalar(prefix + "update_epochs"));
  minibatch = static_cast<std::size_t>(archive.get_scalar(prefix + "minibatch"));
  use_gae = archive.get_scalar(prefix + "use_gae") != 0.0;
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const bool> dones, std::optional<double> bootstrap, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw DimensionError("compute_gae: ragged rollout");
  if (!bootstrap) throw UsageError("compute_gae: missing bootstrap value V(s_T)");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_advantage = 0.0;
  double next_value = *bootstrap;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_advantage = delta + gamma * lambda * live * next_advantage;
    out.advantages[i] = next_advantage;
    out.returns[i] = next_advantage + values[i];
    next_value = values[i];
  }
  return out;
}

void RolloutBuffer::add(Transition t) {
  transitions_.push_back(std::move(t));
  advantages_.clear();
  returns_.clear();
}

void RolloutBuffer::clear() {
  transitions_.clear();
  bootstrap_.reset();
  advantages_.clear();
  returns_.clear();
}

void RolloutBuffer::compute_advantages(double gamma, double lambda, bool use_gae) {
  std::vector<double> rewards, values;
  std::vector<char> done_bytes;
  for (const Transition& t : transitions_) {
    rewards.push_back(t.reward);
    values.push_back(t.value);
  }
  std::unique_ptr<bool[]> dones(new bool[transitions_.size()]);
  for (std::size_t i = 0; i < transitions_.size(); ++i) dones[i] = transitions_[i].done;
  GaeResult r = compute_gae(rewards, values, std::span<const bool>(dones.get(), transitions_.size()),
                            bootstrap_, gamma, use_gae ? lambda : 1.0);
  advantages_ = std::move(r.advantages);
  returns_ = std::move(r.returns);
}

void RolloutBuffer::save(TensorArchive& archive, const std::string& prefix, std::size_t state_dim) const {
  const std::size_t n = transitions_.size();
  archive.put_scalar(prefix + "size", static_cast<double>(n));
  if (n == 0) return;
  std::vector<double> states, actions, rewards, values, log_probs, dones;
  for (const Transition& t : transitions_) {
    if (t.state.size() != state_dim) throw DimensionError("RolloutBuffer::save: ragged states");
    states.insert(states.end(), t.state.begin(), t.state.end());
    actions.push_back(static_cast<double>(static_cast<int>(t.action)));
    rewards.push_back(t.reward);
    values.push_back(t.value);
    log_probs.push_back(t.log_prob);
    dones.push_back(t.done ? 1.0 : 0.0);
  }
  archive.put(prefix + "states", Tensor::from({n, state_dim}, std::move(states)));
  archive.put(prefix + "actions", Tensor::from({n}, std::move(actions)));
  archive.put(prefix + "rewards", Tensor::from({n}, std::move(rewards)));
  archive.put(prefix + "values", Tensor::from({n}, std::move(values)));
  archive.put(prefix + "log_probs", Tensor::from({n}, std::move(log_probs)));
  archive.put(prefix + "dones", Tensor::from({n}, std::move(dones)));
}

void RolloutBuffer::load(const TensorArchive& archive, const std::string& prefix) {
  clear();
  const auto n = static_cast<std::size_t>(archive.get_scalar(prefix + "size"));
  if (n == 0) return;
  const Tensor& states = archive.get(prefix + "states");
  if (states.dim() != 2 || states.size(0) != n) throw FormatError("rollout buffer: bad states section");
  const std::size_t dim = states.size(1);
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    t.state.assign(states.data().begin() + static_cast<std::ptrdiff_t>(i * dim),
                   states.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    t.action = action_from_int(static_cast<int>(archive.get(prefix + "actions")[i]));
    t.reward = archive.get(prefix + "rewards")[i];
    t.value = archive.get(prefix + "values")[i];
    t.log_prob = archive.get(prefix + "log_probs")[i];
    t.done = archive.get(prefix + "dones")[i] != 0.0;
    transitions_.push_back(std::move(t));
  }
}

Tensor clipped_surrogate(const Tensor& ratio, const Tensor& advantages, double clip_epsilon) {
  Tensor unclipped = ops::mul(ratio, advantages);
  Tensor clipped = ops::mul(ops::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon), advantages);
  return ops::minimum(unclipped, clipped);
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  const double n = static_cast<double>(advantages.size());
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / n);
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (advantages[i] - mean) / (stddev + 1e-8);
  return out;
}

PPOLoss ppo_loss(const PolicyNet& policy, const RolloutBuffer& buffer,
                 std::span<const double> advantages, std::span<const std::size_t> index,
                 const PPOControl& control) {
  const auto& ts = buffer.transitions();
  if (advantages.size() != ts.size() || buffer.returns().size() != ts.size()) {
    throw UsageError("ppo_loss: advantages have not been computed for this buffer");
  }
  std::vector<std::size_t> all;
  if (index.empty()) {
    all.resize(ts.size());
    std::iota(all.begin(), all.end(), 0);
    index = all;
  }
  const std::size_t n = index.size();
  const std::size_t dim = policy.options().state_dim;
  std::vector<double> states, old_logp, adv, ret;
  std::vector<int> actions;
  states.reserve(n * dim);
  for (std::size_t i : index) {
    const Transition& t = ts.at(i);
    states.insert(states.end(), t.state.begin(), t.state.end());
    actions.push_back(static_cast<int>(t.action));
    old_logp.push_back(t.log_prob);
    adv.push_back(advantages[i]);
    ret.push_back(buffer.returns()[i]);
  }

  PolicyNet::Evaluation ev = policy.evaluate(Tensor::from({n, dim}, std::move(states)), actions);
  Tensor ratio = ops::exp(ops::sub(ev.log_probs, Tensor::from({n}, std::move(old_logp))));
  Tensor surrogate = clipped_surrogate(ratio, Tensor::from({n}, std::move(adv)), control.clip_epsilon);
  Tensor policy_loss = ops::scale(ops::mean(surrogate), -1.0);
  Tensor value_loss = ops::mse_loss(ev.values, Tensor::from({n}, std::move(ret)));

  PPOLoss out;
  out.total = ops::add(ops::add(policy_loss, ops::scale(value_loss, control.value_coef)),
                       ops::scale(ev.entropy, -control.entropy_coef));
  out.policy_loss = policy_loss.item();
  out.value_loss = value_loss.item();
  out.entropy = ev.entropy.item();
  double ratio_sum = 0.0;
  std::size_t clipped = 0;
  for (double r : ratio.data()) {
    ratio_sum += r;
    if (std::abs(r - 1.0) > control.clip_epsilon) ++clipped;
  }
  out.mean_ratio = ratio_sum / static_cast<double>(n);
  out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(n);
  return out;
}

UpdateStats ppo_update(PolicyNet& policy, const RolloutBuffer& buffer, const PPOControl& control, Rng& rng) {
  control.validate();
  if (buffer.size() != control.rollout_horizon) {
    throw UsageError("ppo_update: buffer holds " + std::to_string(buffer.size()) +
                     " transitions, rollout horizon is " + std::to_string(control.rollout_horizon));
  }
  if (!buffer.has_advantages()) throw UsageError("ppo_update: advantages not computed");
  if (!all_finite(buffer.advantages()) || !all_finite(buffer.returns())) {
    throw NumericError("ppo_update: non-finite advantages or returns (rewards or values were NaN/Inf); update aborted");
  }

  const std::vector<double> advantages = normalize_advantages(buffer.advantages());
  AdamW& opt = policy.optimizer();
  opt.options().learning_rate = control.learning_rate;

  UpdateStats stats;
  stats.learning_rate = control.learning_rate;
  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < control.update_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += control.minibatch) {
      const std::size_t stop = std::min(order.size(), start + control.minibatch);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      PPOLoss loss = ppo_loss(policy, buffer, advantages, batch, control);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss at epoch " << epoch << ", minibatch starting " << start
            << " (policy " << loss.policy_loss << ", value " << loss.value_loss << ", entropy "
            << loss.entropy << ", mean ratio " << loss.mean_ratio << "); update aborted";
        throw NumericError(msg.str());
      }
      opt.zero_grad();
      loss.total.backward();
      opt.step();
      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.entropy += loss.entropy;
      stats.mean_ratio += loss.mean_ratio;
      stats.clip_fraction += loss.clip_fraction;
      stats.total_loss += total;
      ++stats.minibatches;
    }
  }
  const double k = 1.0 / static_cast<double>(stats.minibatches);
  stats.policy_loss *= k;
  stats.value_loss *= k;
  stats.entropy *= k;
  stats.mean_ratio *= k;
  stats.clip_fraction *= k;
  stats.total_loss *= k;
  return stats;
}

}  // namespace rldn
