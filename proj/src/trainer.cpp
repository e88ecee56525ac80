#include "rldn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "rldn/archive.hpp"
#include "rldn/errors.hpp"

namespace rldn {

namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFormat = "rldn-checkpoint-1";
constexpr std::uint64_t kModelSeedTag = 101;
constexpr std::uint64_t kPolicySeedTag = 102;
constexpr std::uint64_t kRngSeedTag = 103;

// Rewards enter the rollout buffer divided by 10 so value targets stay
// O(1)-O(10); raw rewards are still what the logs report.
constexpr double kRewardScale = 0.1;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_csv(const fs::path& path, const char* header) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << header << '\n';
  return f;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw Error("cannot write " + path.string());
}

}  // namespace

std::string code_hash() {
  const std::string text = kCodeVersion;
  const std::string blob = "blob " + std::to_string(text.size()) + std::string(1, '\0') + text;
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(blob.data(), blob.size())));
  return buf;
}

Agent::Agent(const TrainConfig& cfg)
    : config(cfg),
      ablation(cfg.ablation_config()),
      model(EDNetOptions{.channels = 1,
                         .skip_connections = ablation.skip_connections,
                         .learning_rate = cfg.ednet_lr,
                         .weight_decay = cfg.ednet_weight_decay},
            mix_seed(cfg.seed, kModelSeedTag)),
      policy(PolicyOptions{.state_dim = kStateDim,
                           .learning_rate = cfg.ppo.learning_rate,
                           .weight_decay = cfg.policy_weight_decay},
             mix_seed(cfg.seed, kPolicySeedTag)),
      control(cfg.ppo) {
  config.validate();
  control.use_gae = ablation.use_gae;
  policy.set_action_mask(ablation.action_subset);
}

EnvOptions Agent::env_options(bool inference) const {
  EnvOptions o;
  o.max_steps = config.max_steps;
  o.multi_passes = config.multi_passes;
  o.reward = metrics::RewardOptions{.mode = ablation.reward_mode, .clip = ablation.reward_clipping};
  o.inference = inference;
  return o;
}

void summarize(EvalSummary& s) {
  const double n = static_cast<double>(s.rows.size());
  if (s.rows.empty()) throw InsufficientDataError("evaluation produced no rows");
  auto stats = [&](auto get, double& mean, double* stddev) {
    double sum = 0.0;
    for (const EvalRow& r : s.rows) sum += get(r);
    mean = sum / n;
    if (stddev) {
      double ss = 0.0;
      for (const EvalRow& r : s.rows) ss += (get(r) - mean) * (get(r) - mean);
      *stddev = s.rows.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
  };
  stats([](const EvalRow& r) { return r.denoised.psnr_db; }, s.mean_psnr, &s.std_psnr);
  stats([](const EvalRow& r) { return r.denoised.ssim; }, s.mean_ssim, &s.std_ssim);
  stats([](const EvalRow& r) { return r.denoised.rmse; }, s.mean_rmse, &s.std_rmse);
  stats([](const EvalRow& r) { return r.noisy.psnr_db; }, s.mean_noisy_psnr, nullptr);
  stats([](const EvalRow& r) { return r.noisy.ssim; }, s.mean_noisy_ssim, nullptr);
  stats([](const EvalRow& r) { return r.noisy.rmse; }, s.mean_noisy_rmse, nullptr);
}

EvalSummary evaluate_agent(Agent& agent, const std::vector<Sample>& samples, std::vector<Image>* outputs) {
  EvalSummary out;
  const EnvOptions opts = agent.env_options(true);
  PPOControl scratch = agent.control;  // untouched in inference mode
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.low.height != agent.config.image_size || s.low.width != agent.config.image_size) {
      throw FormatError("image " + std::to_string(i) + " is " + std::to_string(s.low.height) + "x" +
                        std::to_string(s.low.width) + ", checkpoint expects " +
                        std::to_string(agent.config.image_size));
    }
    EvalRow row;
    row.index = i;
    row.seed = s.seed;
    row.noisy = metrics::assess(s.low, s.high, opts.reward);
    if (agent.ablation.use_ppo) {
      DenoiseEnv env(opts);
      std::vector<double> state = env.reset(s.low, s.high);
      while (!env.done()) {
        const Action a = agent.policy.greedy(state).action;
        row.actions += static_cast<char>('0' + static_cast<int>(a));
        StepResult r = env.step(a, agent.model, scratch);
        state = std::move(r.next_state);
      }
      row.denoised = metrics::assess(env.state().current, s.high, opts.reward);
      if (outputs) outputs->push_back(env.state().current);
    } else {
      Image current = s.low;
      for (int p = 0; p < agent.ablation.fixed_passes; ++p) {
        current = agent.model.denoise(current);
        row.actions += '0';
      }
      row.denoised = metrics::assess(current, s.high, opts.reward);
      if (outputs) outputs->push_back(std::move(current));
    }
    out.rows.push_back(std::move(row));
  }
  out.infer_ms = 1000.0 * seconds_since(t0) / static_cast<double>(std::max<std::size_t>(1, samples.size()));
  summarize(out);
  return out;
}

Image denoise_without_reference(Agent& agent, const Image& low) {
  Image current = low;
  const int passes = std::max(1, agent.ablation.fixed_passes);
  for (int p = 0; p < passes; ++p) current = agent.model.denoise(current);
  return current;
}

void write_eval_csv(const fs::path& path, const EvalSummary& s) {
  std::ostringstream out;
  out << "image,seed,noisy_psnr,noisy_ssim,noisy_rmse,psnr,ssim,rmse,actions\n";
  for (const EvalRow& r : s.rows) {
    out << r.index << ',' << r.seed << ',' << g17(r.noisy.psnr_db) << ',' << g17(r.noisy.ssim) << ','
        << g17(r.noisy.rmse) << ',' << g17(r.denoised.psnr_db) << ',' << g17(r.denoised.ssim) << ','
        << g17(r.denoised.rmse) << ',' << (r.actions.empty() ? "-" : r.actions) << '\n';
  }
  out << "mean,," << g17(s.mean_noisy_psnr) << ',' << g17(s.mean_noisy_ssim) << ',' << g17(s.mean_noisy_rmse)
      << ',' << g17(s.mean_psnr) << ',' << g17(s.mean_ssim) << ',' << g17(s.mean_rmse) << ",\n";
  out << "std,,,,," << g17(s.std_psnr) << ',' << g17(s.std_ssim) << ',' << g17(s.std_rmse) << ",\n";
  write_text(path, out.str());
}

EvalSummary read_eval_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("image,seed,", 0) != 0) throw FormatError(path.string() + ": not an eval table");
  EvalSummary s;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("mean,", 0) == 0 || line.rfind("std,", 0) == 0) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 9) throw FormatError(path.string() + ": bad row '" + line + "'");
    try {
      EvalRow r;
      r.index = std::stoull(cells[0]);
      r.seed = std::stoull(cells[1]);
      r.noisy.psnr_db = std::stod(cells[2]);
      r.noisy.ssim = std::stod(cells[3]);
      r.noisy.rmse = std::stod(cells[4]);
      r.denoised.psnr_db = std::stod(cells[5]);
      r.denoised.ssim = std::stod(cells[6]);
      r.denoised.rmse = std::stod(cells[7]);
      r.actions = cells[8] == "-" ? "" : cells[8];
      s.rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": bad number in '" + line + "'");
    }
  }
  summarize(s);
  return s;
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  const TensorArchive ar = TensorArchive::load(path);
  if (!ar.contains("format") || ar.get_bytes("format") != kCheckpointFormat) {
    throw FormatError(path.string() + ": not a training checkpoint");
  }
  CheckpointInfo info;
  try {
    info.config = parse_config(ar.get_bytes("config"));
  } catch (const ArgumentError& e) {
    throw FormatError(path.string() + ": bad config section: " + e.what());
  }
  info.episode = static_cast<int>(ar.get_scalar("episode"));
  return info;
}

Agent load_agent(const fs::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  const TensorArchive ar = TensorArchive::load(path);
  Agent agent(info.config);
  agent.model.load(ar, "ednet.");
  agent.policy.load(ar, "policy.");
  agent.control.load(ar, "ppo.");
  return agent;
}

Dataset dataset_for(const TrainConfig& config) {
  if (!config.data_dir.empty()) return load_dataset(config.data_dir);
  DatasetSpec spec;
  spec.count = config.data_count;
  spec.size = config.image_size;
  spec.noise.photon_count = config.dose;
  spec.noise.gaussian_sigma = config.sigma;
  spec.seed = config.data_seed;
  return make_dataset(spec);
}

struct Trainer::Logs {
  std::ofstream steps, updates, episodes, progress;
  std::vector<double> episode_rewards;
};

Trainer::Trainer(const TrainConfig& config, Dataset data)
    : agent_(config), data_(std::move(data)), env_(agent_.env_options(false)), rng_(mix_seed(config.seed, kRngSeedTag)) {
  if (data_.train.empty()) throw InsufficientDataError("training split is empty");
  if (data_.test.empty()) throw InsufficientDataError("test split is empty");
  for (const auto* part : {&data_.train, &data_.test}) {
    for (const Sample& s : *part) {
      if (s.low.height != config.image_size || s.low.width != config.image_size) {
        throw DimensionError("dataset image is " + std::to_string(s.low.height) + "x" +
                             std::to_string(s.low.width) + ", config image_size is " +
                             std::to_string(config.image_size));
      }
    }
  }
}

void Trainer::save_checkpoint(const fs::path& path) const {
  TensorArchive ar;
  ar.put_bytes("format", kCheckpointFormat);
  ar.put_bytes("config", config_to_text(agent_.config));
  ar.put_bytes("code_hash", code_hash());
  ar.put_scalar("episode", episode_);
  ar.put_scalar("updates", static_cast<double>(updates_));
  ar.put_bytes("rng", rng_.state());
  agent_.model.save(ar, "ednet.");
  agent_.policy.save(ar, "policy.");
  agent_.control.save(ar, "ppo.");
  env_.save(ar, "env.");
  buffer_.save(ar, "buffer.", kStateDim);
  ar.save(path);
}

void Trainer::load_checkpoint(const fs::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  if (config_to_text(info.config) != config_to_text(agent_.config)) {
    throw FormatError(path.string() + ": checkpoint config differs from the trainer config");
  }
  const TensorArchive ar = TensorArchive::load(path);
  episode_ = info.episode;
  updates_ = static_cast<std::int64_t>(ar.get_scalar("updates"));
  rng_.set_state(ar.get_bytes("rng"));
  agent_.model.load(ar, "ednet.");
  agent_.policy.load(ar, "policy.");
  agent_.control.load(ar, "ppo.");
  env_.load(ar, "env.");
  buffer_.load(ar, "buffer.");
}

bool Trainer::update_policy(Logs& logs, std::string& message, std::span<const double> next_state) {
  // A finished episode has no successor; otherwise bootstrap from V(s_T).
  buffer_.set_bootstrap(buffer_.transitions().back().done ? 0.0 : agent_.policy.greedy(next_state).value);
  buffer_.compute_advantages(agent_.control.gamma, agent_.control.lambda, agent_.control.use_gae);
  UpdateStats st;
  try {
    st = ppo_update(agent_.policy, buffer_, agent_.control, rng_);
  } catch (const NumericError& e) {
    message = std::string("episode ") + std::to_string(episode_) + ", update " + std::to_string(updates_) + ": " + e.what();
    return false;
  }
  logs.updates << updates_ << ',' << episode_ << ',' << g17(st.policy_loss) << ',' << g17(st.value_loss) << ','
               << g17(st.entropy) << ',' << g17(st.total_loss) << ',' << g17(st.mean_ratio) << ','
               << g17(st.clip_fraction) << ',' << g17(st.learning_rate) << ',' << g17(agent_.control.entropy_coef)
               << ',' << g17(agent_.control.value_coef) << '\n';
  ++updates_;
  buffer_.clear();
  return true;
}

bool Trainer::run_episode(Logs& logs, std::string& message) {
  const Sample& sample = data_.train[rng_.below(data_.train.size())];
  std::vector<double> state = env_.reset(sample.low, sample.high);
  double total = 0.0;
  int fine_tunes = 0;
  metrics::QualityReport last{};
  while (!env_.done()) {
    const PolicyNet::Sample pick = agent_.policy.act(state, rng_);
    const int step = env_.state().step_index;
    StepResult r = env_.step(pick.action, agent_.model, agent_.control);
    if (pick.action == Action::kFineTune) ++fine_tunes;
    logs.steps << episode_ << ',' << step << ',' << static_cast<int>(pick.action) << ',' << action_name(pick.action)
               << ',' << g17(r.reward) << ',' << g17(r.info.quality.psnr_db) << ',' << g17(r.info.quality.ssim)
               << ',' << g17(r.info.quality.rmse) << '\n';
    if (r.info.numeric_abort) {
      message = "episode " + std::to_string(episode_) + ", step " + std::to_string(step) +
                ": denoiser fine-tune produced a non-finite loss; update skipped";
      return false;
    }
    total += r.reward;
    last = r.info.quality;
    buffer_.add(Transition{std::move(state), pick.action, r.reward * kRewardScale, pick.value, pick.log_prob, r.done});
    state = std::move(r.next_state);
    if (buffer_.size() == agent_.control.rollout_horizon && !update_policy(logs, message, state)) return false;
  }
  const double mean = total / agent_.config.max_steps;
  logs.episode_rewards.push_back(mean);
  logs.episodes << episode_ << ',' << sample.seed << ',' << g17(mean) << ',' << g17(total) << ','
                << g17(last.psnr_db) << ',' << g17(last.ssim) << ',' << g17(last.rmse) << ',' << fine_tunes << '\n';
  return true;
}

bool Trainer::run_supervised_episode(Logs& logs, std::string& message) {
  const Sample& sample = data_.train[rng_.below(data_.train.size())];
  try {
    agent_.model.fine_tune_step(sample.low, sample.high);
  } catch (const NumericError& e) {
    message = "episode " + std::to_string(episode_) + ": " + e.what();
    return false;
  }
  Image current = sample.low;
  for (int p = 0; p < agent_.ablation.fixed_passes; ++p) current = agent_.model.denoise(current);
  const metrics::QualityReport q = metrics::assess(current, sample.high, env_.options().reward);
  logs.steps << episode_ << ",0,-1,supervised," << g17(q.reward) << ',' << g17(q.psnr_db) << ',' << g17(q.ssim)
             << ',' << g17(q.rmse) << '\n';
  logs.episode_rewards.push_back(q.reward);
  logs.episodes << episode_ << ',' << sample.seed << ',' << g17(q.reward) << ',' << g17(q.reward) << ','
                << g17(q.psnr_db) << ',' << g17(q.ssim) << ',' << g17(q.rmse) << ",1\n";
  return true;
}

RunResult Trainer::train(const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "checkpoints", ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());

  Logs logs;
  logs.steps = open_csv(out_dir / "steps.csv", "episode,step,action,action_name,reward,psnr,ssim,rmse");
  logs.updates = open_csv(out_dir / "updates.csv",
                          "update,episode,policy_loss,value_loss,entropy,total_loss,mean_ratio,clip_fraction,"
                          "learning_rate,entropy_coef,value_coef");
  logs.episodes = open_csv(out_dir / "episodes.csv",
                           "episode,sample_seed,mean_reward,total_reward,final_psnr,final_ssim,final_rmse,fine_tunes");
  logs.progress = open_csv(out_dir / "eval_progress.csv", "episode,psnr,ssim,rmse");

  RunResult result;
  const int first_episode = episode_;
  const auto t0 = std::chrono::steady_clock::now();
  while (episode_ < agent_.config.episodes) {
    const bool ok = agent_.ablation.use_ppo ? run_episode(logs, result.message)
                                            : run_supervised_episode(logs, result.message);
    if (!ok) {
      result.status = RunStatus::kNumericAbort;
      logs.episodes.flush();
      save_checkpoint(out_dir / "abort.ckpt");
      result.message += " (state saved to " + (out_dir / "abort.ckpt").string() + ")";
      break;
    }
    ++episode_;
    const auto& cfg = agent_.config;
    if (cfg.eval_every > 0 && episode_ % cfg.eval_every == 0) {
      const EvalSummary ev = evaluate_agent(agent_, data_.test);
      logs.progress << episode_ << ',' << g17(ev.mean_psnr) << ',' << g17(ev.mean_ssim) << ',' << g17(ev.mean_rmse)
                    << '\n';
    }
    if (cfg.checkpoint_every > 0 && episode_ % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ep_%06d.ckpt", episode_);
      save_checkpoint(out_dir / "checkpoints" / name);
    }
  }
  result.train_seconds = seconds_since(t0);
  result.episodes_completed = episode_;
  result.episode_rewards = logs.episode_rewards;
  const int ran = episode_ - first_episode;
  result.seconds_per_episode = ran > 0 ? result.train_seconds / ran : 0.0;

  nlohmann::ordered_json manifest;
  manifest["code_version"] = kCodeVersion;
  manifest["code_hash"] = code_hash();
  manifest["ablation"] = agent_.ablation.id;
  manifest["description"] = agent_.ablation.description;
  manifest["seed"] = agent_.config.seed;
  manifest["config"] = config_to_text(agent_.config);
  manifest["first_episode"] = first_episode;
  manifest["episodes_completed"] = episode_;

  if (result.status == RunStatus::kCompleted) {
    save_checkpoint(out_dir / "final.ckpt");
    result.final_eval = evaluate_agent(agent_, data_.test);
    write_eval_csv(out_dir / "final_eval.csv", result.final_eval);
    nlohmann::ordered_json summary;
    const EvalSummary& ev = result.final_eval;
    summary["images"] = ev.rows.size();
    summary["psnr_mean"] = ev.mean_psnr;
    summary["psnr_std"] = ev.std_psnr;
    summary["ssim_mean"] = ev.mean_ssim;
    summary["ssim_std"] = ev.std_ssim;
    summary["rmse_mean"] = ev.mean_rmse;
    summary["rmse_std"] = ev.std_rmse;
    summary["noisy_psnr_mean"] = ev.mean_noisy_psnr;
    summary["noisy_ssim_mean"] = ev.mean_noisy_ssim;
    summary["noisy_rmse_mean"] = ev.mean_noisy_rmse;
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    manifest["status"] = "completed";
    manifest["infer_ms"] = ev.infer_ms;
  } else {
    manifest["status"] = "numeric_abort";
    manifest["message"] = result.message;
  }
  manifest["train_seconds"] = result.train_seconds;
  manifest["seconds_per_episode"] = result.seconds_per_episode;
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace rldn
