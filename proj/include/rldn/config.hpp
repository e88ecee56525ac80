#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rldn/metrics.hpp"
#include "rldn/policy.hpp"
#include "rldn/ppo.hpp"

namespace rldn {

/// Component switches for one row of the ablation matrix.
struct AblationConfig {
  std::string id = "full";
  std::string description;
  bool use_ppo = true;
  int fixed_passes = 0;  // denoising passes at evaluation when use_ppo is false
  bool reward_clipping = true;
  bool use_gae = true;
  bool dynamic_actions = true;  // FineTune and AdjustPpo available
  ActionMask action_subset = kAllActions;
  bool skip_connections = true;
  metrics::RewardMode reward_mode = metrics::RewardMode::kPsnrSsim;

  /// "full" or A1..A9 (case-insensitive). Throws ArgumentError otherwise.
  static AblationConfig from_id(const std::string& id);
};

/// The known ablation ids in table order, "full" first.
const std::vector<std::string>& ablation_ids();

struct TrainConfig {
  int episodes = 300;
  int max_steps = 8;
  int multi_passes = 3;

  std::size_t image_size = 32;
  std::size_t data_count = 100;  // 80 train / 20 test
  double dose = 30.0;            // photon count N0; low enough that denoising has headroom
  double sigma = 0.01;
  std::uint64_t data_seed = 1;
  std::string data_dir;  // empty: generate in memory from the fields above

  std::uint64_t seed = 0;
  int eval_every = 25;
  int checkpoint_every = 50;

  PPOControl ppo;
  double ednet_lr = 5e-5;
  double ednet_weight_decay = 1e-4;
  double policy_weight_decay = 1e-4;

  std::string ablation = "full";

  /// Throws ArgumentError on out-of-range values.
  void validate() const;
  AblationConfig ablation_config() const { return AblationConfig::from_id(ablation); }
};

/// Flat `key = value` text; `#` starts a comment. Unknown keys and
/// malformed values raise ArgumentError.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Canonical text form: every key, one per line, doubles in %.17g.
std::string config_to_text(const TrainConfig& config);

}  // namespace rldn
