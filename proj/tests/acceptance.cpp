// Acceptance suite: one PASS/FAIL line per criterion.
//
// Criteria 6-8 train the default configuration (300 episodes on 32x32
// phantoms) for three seeds plus the A1/A3/A8 ablations, so a full run takes
// tens of minutes on one core. Run directories go to $RLDN_ACCEPTANCE_DIR or
// ./acceptance_runs. Criterion numbers given as arguments restrict the run,
// e.g. `acceptance 1 2 3 4 5` skips the training.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rldn/ablation.hpp"
#include "rldn/ednet.hpp"
#include "rldn/environment.hpp"
#include "rldn/errors.hpp"
#include "rldn/metrics.hpp"
#include "rldn/ops.hpp"
#include "rldn/policy.hpp"
#include "rldn/ppo.hpp"
#include "rldn/trainer.hpp"
#include "rldn/wilcoxon.hpp"
#include "support.hpp"

using namespace rldn;
namespace fs = std::filesystem;
namespace m = rldn::metrics;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

struct GradTally {
  int checks = 0;
  double worst = 0.0;
  std::string worst_name;

  void add(const std::string& name, const test::GradCheck& g) {
    ++checks;
    if (!(g.rel_error <= worst)) {
      worst = g.rel_error;
      worst_name = name;
    }
  }
};

Verdict gradient_correctness() {
  using test::random_tensor;
  const auto t0 = std::chrono::steady_clock::now();
  GradTally tally;
  Rng rng(101);
  auto check = [&](const std::string& name, const test::GraphFn& f, const std::vector<Tensor>& in) {
    tally.add(name, test::check_gradients(f, in, rng));
  };

  for (int t = 0; t < 20; ++t) {
    const Shape s = {1 + rng.below(4), 1 + rng.below(5)};
    Tensor a = random_tensor(rng, s), b = random_tensor(rng, s);
    check("add", [](auto& x) { return ops::add(x[0], x[1]); }, {a, b});
    check("sub", [](auto& x) { return ops::sub(x[0], x[1]); }, {a, b});
    check("mul", [](auto& x) { return ops::mul(x[0], x[1]); }, {a, b});
    check("scale", [](auto& x) { return ops::scale(x[0], 0.7); }, {a});
    check("add_scalar", [](auto& x) { return ops::add_scalar(x[0], -0.2); }, {a});
    check("exp", [](auto& x) { return ops::exp(x[0]); }, {a});
    check("square", [](auto& x) { return ops::square(x[0]); }, {a});
    check("log", [](auto& x) { return ops::log(x[0]); }, {random_tensor(rng, s, 0.2, 2.0)});
    check("relu", [](auto& x) { return ops::relu(x[0]); }, {test::away_from_zero(rng, s)});
    Tensor c = random_tensor(rng, s, -0.5, 0.5);
    for (double& v : c.mutable_data()) {
      if (std::abs(std::abs(v) - 0.25) < 1e-2) v *= 0.9;
    }
    check("clamp", [](auto& x) { return ops::clamp(x[0], -0.25, 0.25); }, {c});
    Tensor e = ops::add(a.detach(), test::away_from_zero(rng, s)).detach().set_requires_grad(true);
    check("minimum", [](auto& x) { return ops::minimum(x[0], x[1]); }, {a, e});
    check("sum", [](auto& x) { return ops::sum(x[0]); }, {a});
    check("mean", [](auto& x) { return ops::mean(x[0]); }, {a});
    check("sum_rows", [](auto& x) { return ops::sum_rows(x[0]); }, {a});
    const Shape flipped = {s[1], s[0]};
    check("reshape", [flipped](auto& x) { return ops::reshape(x[0], flipped); }, {a});
    std::vector<int> idx(s[0]);
    for (int& i : idx) i = static_cast<int>(rng.below(s[1]));
    check("gather_rows", [idx](auto& x) { return ops::gather_rows(x[0], idx); }, {a});
    check("mse_loss", [](auto& x) { return ops::mse_loss(x[0], x[1]); }, {a, b});

    const std::size_t in = 1 + rng.below(6), out = 1 + rng.below(5);
    Tensor xl = random_tensor(rng, {s[0], in}), w = random_tensor(rng, {out, in}), bl = random_tensor(rng, {out});
    check("linear", [](auto& v) { return ops::linear(v[0], v[1], v[2]); }, {xl, w, bl});
    Tensor logits = random_tensor(rng, {s[0], out}, -3, 3);
    check("softmax", [](auto& v) { return ops::softmax(v[0]); }, {logits});
    check("log_softmax", [](auto& v) { return ops::log_softmax(v[0]); }, {logits});

    const std::size_t cin = 1 + rng.below(2), cout = 1 + rng.below(3), h = 3 + rng.below(4), wd = 3 + rng.below(4);
    const int stride = 1 + static_cast<int>(rng.below(2));
    Tensor x = random_tensor(rng, {cin, h, wd}), k = random_tensor(rng, {cout, cin, 3, 3});
    Tensor kb = random_tensor(rng, {cout}), kt = random_tensor(rng, {cin, cout, 3, 3});
    check("conv2d", [stride](auto& v) { return ops::conv2d(v[0], v[1], v[2], stride, 1); }, {x, k, kb});
    const int op = stride == 2 ? 1 : 0;
    check("conv_transpose2d", [stride, op](auto& v) { return ops::conv_transpose2d(v[0], v[1], v[2], stride, 1, op); },
          {x, kt, kb});
    Tensor g = random_tensor(rng, {cin}, 0.5, 2.0), be = random_tensor(rng, {cin});
    auto stats = ops::BatchNormStats::fresh(cin);
    if (h * wd > 1) {
      check("batchnorm2d/train",
            [&stats](auto& v) { return ops::batchnorm2d(v[0], v[1], v[2], stats, ops::NormMode::kTrain); }, {x, g, be});
      check("batchnorm2d/eval",
            [&stats](auto& v) { return ops::batchnorm2d(v[0], v[1], v[2], stats, ops::NormMode::kEval); }, {x, g, be});
    }
  }

  // Composed losses: EDNet reconstruction and the PPO objective.
  for (int t = 0; t < 20; ++t) {
    EDNet net({}, 200 + t);
    net.set_mode(ops::NormMode::kTrain);
    for (double& w : net.stages().back().weight.mutable_data()) w *= 30.0;
    const Tensor x = random_tensor(rng, {1, 8, 8}, 0.2, 0.8, false);
    const Tensor y = random_tensor(rng, {1, 8, 8}, 0.0, 1.0, false);
    std::vector<Tensor> params = net.parameters();
    std::vector<std::vector<std::size_t>> picks;
    for (const Tensor& p : params) picks.push_back({rng.below(p.numel()), rng.below(p.numel())});
    auto f = [&](const std::vector<Tensor>&) { return ops::mse_loss(net.forward(x), y); };
    tally.add("ednet_mse", test::check_gradients(f, params, rng, 1e-5, picks));
  }
  for (int t = 0; t < 20; ++t) {
    PolicyNet p({.state_dim = 6, .hidden1 = 8, .hidden2 = 8}, 300 + t);
    for (double& w : p.actor().weight.mutable_data()) w *= 100.0;
    RolloutBuffer buf;
    for (int i = 0; i < 4; ++i) {
      std::vector<double> s(6);
      for (double& v : s) v = rng.uniform();
      const auto pick = p.act(s, rng);
      buf.add({s, pick.action, rng.uniform(), pick.value, pick.log_prob + rng.uniform(-0.4, 0.4), i % 2 == 1});
    }
    buf.set_bootstrap(0.0);
    buf.compute_advantages(0.99, 0.95);
    std::vector<double> adv(4);
    for (double& a : adv) a = rng.uniform(-2, 2);
    const PPOControl ctl;
    auto f = [&](const std::vector<Tensor>&) { return ppo_loss(p, buf, adv, {}, ctl).total; };
    tally.add("ppo_loss", test::check_gradients(f, p.parameters(), rng));
  }

  const double secs = seconds_since(t0);
  Verdict v;
  v.detail = fmt("%d checks, worst relative error %.2e (%s), %.1f s", tally.checks, tally.worst,
                 tally.worst_name.c_str(), secs);
  v.require(tally.worst < 1e-4, "relative error above 1e-4");
  v.require(secs < 120.0, "slower than 2 min");
  return v;
}

// ---------------------------------------------------------------- criterion 2

Verdict metric_oracles() {
  Rng rng(102);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Image a = test::random_image(rng, 16, 16), b = test::random_image(rng, 16, 16);
    worst = std::max({worst, std::abs(m::psnr(a, b) - test::oracle_psnr(a, b)),
                      std::abs(m::ssim(a, b) - test::oracle_ssim(a, b)),
                      std::abs(m::rmse(a, b) - test::oracle_rmse(a, b))});
  }
  bool exact = true;
  for (int t = 0; t < 100; ++t) {
    const Image a = test::random_image(rng, 16, 16);
    exact = exact && m::ssim(a, a) == 1.0 && m::rmse(a, a) == 0.0;
  }
  Verdict v;
  v.detail = fmt("100 pairs, max deviation %.2e; identities %s", worst, exact ? "exact" : "inexact");
  v.require(worst <= 1e-9, "oracle mismatch");
  v.require(exact, "ssim(x,x)=1 or rmse(x,x)=0 not exact");
  return v;
}

// ---------------------------------------------------------------- criterion 3

Verdict reward_law() {
  Rng rng(103);
  const double inf = std::numeric_limits<double>::infinity();
  const double specials[] = {std::nan(""), inf, -inf, 0.0, -0.0, 1e308, -1e308, 100.0, 250.0};
  int bad_range = 0, bad_nan = 0, bad_clip = 0, nan_inputs = 0;
  for (int t = 0; t < 10000; ++t) {
    auto draw = [&](double lo, double hi) {
      return rng.uniform() < 0.2 ? specials[rng.below(std::size(specials))] : rng.uniform(lo, hi);
    };
    const double psnr = draw(-50, 300), ssim = draw(-1.5, 1.5);
    nan_inputs += std::isnan(psnr) || std::isnan(ssim);
    const double r = m::reward_from_components(psnr, ssim);
    if (std::isnan(r) || r < 0.0 || r > 100.0) ++bad_range;
    const double zeroed = m::reward_from_components(std::isnan(psnr) ? 0.0 : psnr, std::isnan(ssim) ? 0.0 : ssim);
    if (std::memcmp(&zeroed, &r, sizeof r) != 0) ++bad_nan;
    const double clipped = std::max(0.0, std::min(r, 100.0));
    if (std::memcmp(&clipped, &r, sizeof r) != 0) ++bad_clip;
  }
  Verdict v;
  v.detail = fmt("10000 inputs (%d with NaN): %d out of range, %d NaN-as-zero violations, %d clip mismatches",
                 nan_inputs, bad_range, bad_nan, bad_clip);
  v.require(bad_range == 0 && bad_nan == 0 && bad_clip == 0, "reward law violated");
  return v;
}

// ---------------------------------------------------------------- criterion 4

Verdict gae_oracle() {
  Rng rng(104);
  double worst = 0.0, worst_limits = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> r(n), val(n);
    const std::unique_ptr<bool[]> d(new bool[n]);
    std::vector<bool> dv(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.uniform(-2, 5);
      val[i] = rng.uniform(-3, 3);
      d[i] = dv[i] = rng.uniform() < 0.25;
    }
    const double boot = rng.uniform(-3, 3), gamma = rng.uniform(0.5, 1.0), lambda = rng.uniform(0.0, 1.0);
    const std::span<const bool> done(d.get(), n);
    const auto got = compute_gae(r, val, done, boot, gamma, lambda);
    const auto want = test::oracle_gae(r, val, dv, boot, gamma, lambda);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(got.advantages[i] - want[i]));

    // lambda = 0: one-step TD residual. lambda = 1: discounted return minus value.
    const auto td = compute_gae(r, val, done, boot, gamma, 0.0);
    const auto mc = compute_gae(r, val, done, boot, gamma, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double next = dv[i] ? 0.0 : (i + 1 < n ? val[i + 1] : boot);
      worst_limits = std::max(worst_limits, std::abs(td.advantages[i] - (r[i] + gamma * next - val[i])));
      double ret = 0.0, disc = 1.0;
      std::size_t j = i;
      for (; j < n; ++j) {
        ret += disc * r[j];
        disc *= gamma;
        if (dv[j]) break;
      }
      if (j == n) ret += disc * boot;
      worst_limits = std::max(worst_limits, std::abs(mc.advantages[i] - (ret - val[i])));
    }
  }
  Verdict v;
  v.detail = fmt("200 rollouts, max deviation %.2e; lambda limits %.2e", worst, worst_limits);
  v.require(worst <= 1e-10, "GAE mismatch");
  v.require(worst_limits <= 1e-10, "lambda limit mismatch");
  return v;
}

// ---------------------------------------------------------------- criterion 5

Verdict clip_arithmetic() {
  auto surr = [](double r, double a) {
    return clipped_surrogate(Tensor::from({1}, {r}), Tensor::from({1}, {a}), 0.2).item();
  };
  const double up = surr(1.5, 1.0), down = surr(0.5, -1.0);

  PolicyNet p({}, 5);
  Rng rng(105);
  RolloutBuffer buf;
  for (int t = 0; t < 32; ++t) {
    std::vector<double> s(kStateDim);
    for (double& x : s) x = rng.uniform();
    const auto pick = p.act(s, rng);
    buf.add({s, pick.action, rng.uniform(), pick.value, pick.log_prob, t % 8 == 7});
  }
  buf.set_bootstrap(0.0);
  buf.compute_advantages(0.99, 0.95);
  const PPOLoss loss = ppo_loss(p, buf, normalize_advantages(buf.advantages()), {}, PPOControl{});

  Verdict v;
  v.detail = fmt("(1.5,+1) -> %.17g, (0.5,-1) -> %.17g, mean ratio %.17g", up, down, loss.mean_ratio);
  v.require(up == 1.2 && down == -0.8, "surrogate values differ");
  v.require(loss.mean_ratio == 1.0 && loss.clip_fraction == 0.0, "ratios not exactly 1");
  return v;
}

// ---------------------------------------------------------------- criteria 6-8

constexpr std::uint64_t kSeeds[] = {0, 1, 2};
const std::vector<std::string> kAblations = {"A1", "A3", "A8"};

struct RunOutcome {
  RunResult result;
  fs::path dir;
};

RunOutcome train_run(const fs::path& dir, std::uint64_t seed, const std::string& ablation) {
  TrainConfig config;
  config.seed = seed;
  config.ablation = ablation;
  fs::remove_all(dir);
  std::cerr << "  training " << ablation << " seed " << seed << " -> " << dir.string() << std::endl;
  Trainer trainer(config, dataset_for(config));
  return {trainer.train(dir), dir};
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t count) {
  double s = 0.0;
  for (std::size_t i = from; i < from + count; ++i) s += v[i];
  return s / static_cast<double>(count);
}

Verdict learning(const std::vector<RunOutcome>& full) {
  Verdict v;
  double ratio_sum = 0.0, gain_sum = 0.0, seconds = 0.0;
  std::string per_seed;
  for (const RunOutcome& run : full) {
    const auto& r = run.result;
    if (r.status != RunStatus::kCompleted || r.episode_rewards.size() < 100) {
      v.require(false, "run did not complete: " + r.message);
      return v;
    }
    const std::size_t n = r.episode_rewards.size();
    const double ratio = mean_of(r.episode_rewards, n - 50, 50) / mean_of(r.episode_rewards, 0, 50);
    const double gain = r.final_eval.mean_psnr - r.final_eval.mean_noisy_psnr;
    ratio_sum += ratio;
    gain_sum += gain;
    seconds += r.train_seconds;
    per_seed += fmt(" [ratio %.3f, gain %+.2f dB]", ratio, gain);
  }
  const double k = static_cast<double>(full.size());
  const double ratio = ratio_sum / k, gain = gain_sum / k;
  v.detail = fmt("seed-averaged last50/first50 reward %.3f, held-out PSNR gain %+.2f dB, %.0f s total;", ratio, gain,
                 seconds) + per_seed;
  v.require(ratio >= 1.10, "reward improvement below 10%");
  v.require(gain >= 2.0, "PSNR gain below 2 dB");
  v.require(seconds <= 1800.0, "slower than 30 min");
  return v;
}

std::vector<double> per_image_psnr(const EvalSummary& ev) {
  std::vector<double> out;
  for (const EvalRow& row : ev.rows) out.push_back(row.denoised.psnr_db);
  return out;
}

Verdict ablation_direction(const fs::path& root, const std::vector<RunOutcome>& full) {
  Verdict v;
  std::vector<double> full_psnr;
  for (const RunOutcome& run : full) {
    const auto p = per_image_psnr(run.result.final_eval);
    full_psnr.insert(full_psnr.end(), p.begin(), p.end());
  }
  const double full_mean = mean_of(full_psnr, 0, full_psnr.size());
  v.detail = fmt("full %.3f dB", full_mean);

  for (const std::string& id : kAblations) {
    std::vector<double> psnr;
    for (std::size_t s = 0; s < std::size(kSeeds); ++s) {
      const fs::path dir = root / fmt("seed%llu", static_cast<unsigned long long>(kSeeds[s])) / id;
      const RunOutcome run = train_run(dir, kSeeds[s], id);
      if (run.result.status != RunStatus::kCompleted) {
        v.require(false, id + " did not complete: " + run.result.message);
        return v;
      }
      const auto p = per_image_psnr(run.result.final_eval);
      psnr.insert(psnr.end(), p.begin(), p.end());
    }
    const double mean = mean_of(psnr, 0, psnr.size());
    std::string p_text;
    try {
      p_text = fmt("p=%.3g", m::wilcoxon_signed_rank(full_psnr, psnr).p_value);
    } catch (const InsufficientDataError&) {
      p_text = "p=1 (insufficient data)";
    }
    v.detail += fmt(", %s %.3f dB (%s)", id.c_str(), mean, p_text.c_str());
    v.require(full_mean >= mean, "full below " + id);
  }

  // Per-seed tables in the usual report format.
  for (std::uint64_t seed : kSeeds) {
    const fs::path dir = root / fmt("seed%llu", static_cast<unsigned long long>(seed));
    write_report_csv(dir / "ablation.csv", build_report(dir, kAblations));
  }
  return v;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<missing " + path.string() + ">";
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

Verdict reproducibility(const fs::path& root, const RunOutcome& first) {
  Verdict v;
  const RunOutcome second = train_run(root / "repro", kSeeds[0], "full");
  std::vector<fs::path> files = {"steps.csv",   "updates.csv",    "episodes.csv", "eval_progress.csv",
                                 "final.ckpt",  "final_eval.csv", "summary.json"};
  for (const auto& e : fs::directory_iterator(first.dir / "checkpoints")) {
    files.push_back(fs::path("checkpoints") / e.path().filename());
  }
  int differing = 0;
  for (const fs::path& f : files) {
    if (slurp(first.dir / f) != slurp(second.dir / f)) {
      ++differing;
      v.require(false, f.string() + " differs");
    }
  }

  // Resume from the last checkpoint that still has episodes ahead of it.
  TrainConfig config;
  config.seed = kSeeds[0];
  fs::path latest;
  for (const auto& e : fs::directory_iterator(first.dir / "checkpoints")) {
    if (read_checkpoint_info(e.path()).episode < config.episodes) latest = std::max(latest, e.path());
  }
  Trainer resumed(config, dataset_for(config));
  resumed.load_checkpoint(latest);
  const int from = resumed.episode();
  const fs::path rdir = root / "resume";
  fs::remove_all(rdir);
  resumed.train(rdir);
  v.require(slurp(rdir / "final.ckpt") == slurp(first.dir / "final.ckpt"), "resumed final checkpoint differs");
  v.require(slurp(rdir / "final_eval.csv") == slurp(first.dir / "final_eval.csv"), "resumed eval table differs");
  const auto all = lines_of(slurp(first.dir / "steps.csv")), tail = lines_of(slurp(rdir / "steps.csv"));
  const std::size_t skip = static_cast<std::size_t>(from) * static_cast<std::size_t>(config.max_steps);
  bool same_tail = tail.size() > 1 && all.size() == tail.size() + skip;
  for (std::size_t i = 1; same_tail && i < tail.size(); ++i) same_tail = tail[i] == all[i + skip];
  v.require(same_tail, "resumed step log differs");

  v.detail = fmt("%zu files compared, %d differ; resume from episode %d %s", files.size(), differing, from,
                 v.pass ? "matches bit for bit" : "diverges");
  return v;
}

void report(int id, const char* name, const Verdict& v, int& failures) {
  std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << v.detail << std::endl;
  failures += !v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<bool> wanted(9, argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > 8) {
      std::cerr << "usage: acceptance [criterion 1-8 ...]\n";
      return 2;
    }
    wanted[id] = true;
  }

  const char* env = std::getenv("RLDN_ACCEPTANCE_DIR");
  const fs::path root = env && *env ? fs::path(env) : fs::current_path() / "acceptance_runs";
  fs::create_directories(root);

  int failures = 0;
  auto guarded = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    if (!wanted[id]) return;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    report(id, name, v, failures);
  };

  guarded(1, "gradient correctness", gradient_correctness);
  guarded(2, "metric oracles", metric_oracles);
  guarded(3, "reward law", reward_law);
  guarded(4, "GAE oracle", gae_oracle);
  guarded(5, "PPO clip arithmetic", clip_arithmetic);

  std::vector<RunOutcome> full;
  std::string setup_error;
  try {
    for (std::uint64_t seed : kSeeds) {
      if (!wanted[6] && !wanted[7] && !wanted[8]) break;
      full.push_back(train_run(root / fmt("seed%llu", static_cast<unsigned long long>(seed)) / "full", seed, "full"));
    }
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  auto needs_runs = [&](auto fn) {
    return [&, fn]() -> Verdict {
      if (!setup_error.empty()) throw Error("full-model training failed: " + setup_error);
      return fn();
    };
  };
  guarded(6, "learning at desk scale", needs_runs([&] { return learning(full); }));
  guarded(7, "ablation directionality", needs_runs([&] { return ablation_direction(root, full); }));
  guarded(8, "reproducibility", needs_runs([&] { return reproducibility(root, full.front()); }));

  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
