#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "rldn/config.hpp"
#include "rldn/dataset.hpp"
#include "rldn/ednet.hpp"
#include "rldn/environment.hpp"
#include "rldn/policy.hpp"
#include "rldn/ppo.hpp"
#include "rldn/random.hpp"

namespace rldn {

inline constexpr const char* kCodeVersion = "rldn 1.0.0";

/// Content hash of the code version string: FNV-1a over "blob <len>\0<text>".
std::string code_hash();

/// Denoiser, policy and PPO settings built from one config.
struct Agent {
  TrainConfig config;
  AblationConfig ablation;
  EDNet model;
  PolicyNet policy;
  PPOControl control;

  explicit Agent(const TrainConfig& config);
  EnvOptions env_options(bool inference) const;
};

struct EvalRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  metrics::QualityReport noisy;
  metrics::QualityReport denoised;
  std::string actions;  // greedy action ids, one digit per step
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  double mean_psnr = 0.0, std_psnr = 0.0;
  double mean_ssim = 0.0, std_ssim = 0.0;
  double mean_rmse = 0.0, std_rmse = 0.0;
  double mean_noisy_psnr = 0.0, mean_noisy_ssim = 0.0, mean_noisy_rmse = 0.0;
  double infer_ms = 0.0;  // wall clock per image; not written to the eval table
};

/// Greedy rollout (or fixed passes for the no-PPO variants) on every sample.
/// Nothing in the agent is modified. Final images go to `outputs` if given.
EvalSummary evaluate_agent(Agent& agent, const std::vector<Sample>& samples, std::vector<Image>* outputs = nullptr);

/// Denoises an image without a reference: the policy state needs the reward
/// against a clean image, so this runs plain EDNet passes (the variant's
/// fixed pass count, at least one).
Image denoise_without_reference(Agent& agent, const Image& low);

/// Summary statistics of `rows` (sample standard deviation).
void summarize(EvalSummary& summary);

/// Per-image rows followed by "mean" and "std" rows; doubles in %.17g.
void write_eval_csv(const std::filesystem::path& path, const EvalSummary& summary);
EvalSummary read_eval_csv(const std::filesystem::path& path);

/// Training checkpoint: config text, counters, RNG state, both networks with
/// their optimizers, PPO control, environment reward window and any partial
/// rollout.
struct CheckpointInfo {
  TrainConfig config;
  int episode = 0;
};
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads the networks of a checkpoint into a fresh agent.
Agent load_agent(const std::filesystem::path& path);

enum class RunStatus { kCompleted, kNumericAbort };

struct RunResult {
  RunStatus status = RunStatus::kCompleted;
  std::string message;
  int episodes_completed = 0;
  std::vector<double> episode_rewards;  // mean step reward per episode
  EvalSummary final_eval;
  double train_seconds = 0.0;
  double seconds_per_episode = 0.0;
};

/// Runs the episode/step loop with PPO updates every `rollout_horizon`
/// transitions.
///
/// Output directory layout:
///   steps.csv         episode,step,action,action_name,reward,psnr,ssim,rmse
///   updates.csv       one row per PPO update
///   episodes.csv      per-episode reward summary
///   eval_progress.csv periodic held-out evaluation
///   checkpoints/      ep_NNNNNN.ckpt every checkpoint_every episodes
///   final.ckpt, final_eval.csv, summary.json, manifest.json
class Trainer {
 public:
  Trainer(const TrainConfig& config, Dataset data);

  /// Continues from a checkpoint written by a run with the same data.
  void load_checkpoint(const std::filesystem::path& path);
  void save_checkpoint(const std::filesystem::path& path) const;

  RunResult train(const std::filesystem::path& out_dir);

  Agent& agent() { return agent_; }
  const Dataset& data() const { return data_; }
  int episode() const { return episode_; }
  const DenoiseEnv& env() const { return env_; }
  const RolloutBuffer& buffer() const { return buffer_; }

 private:
  struct Logs;
  bool run_episode(Logs& logs, std::string& message);
  bool run_supervised_episode(Logs& logs, std::string& message);
  bool update_policy(Logs& logs, std::string& message, std::span<const double> next_state);

  Agent agent_;
  Dataset data_;
  DenoiseEnv env_;
  RolloutBuffer buffer_;
  Rng rng_;
  int episode_ = 0;
  std::int64_t updates_ = 0;
};

/// Builds or loads the dataset a config refers to.
Dataset dataset_for(const TrainConfig& config);

}  // namespace rldn
