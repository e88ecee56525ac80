// rldn command-line driver: gen-data, train, eval, denoise, ablate, report.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "rldn/ablation.hpp"
#include "rldn/archive.hpp"
#include "rldn/dataset.hpp"
#include "rldn/errors.hpp"
#include "rldn/png.hpp"
#include "rldn/trainer.hpp"

namespace fs = std::filesystem;
using namespace rldn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumeric = 4;

void write_manifest(const fs::path& path, nlohmann::ordered_json body) {
  body["code_version"] = kCodeVersion;
  body["code_hash"] = code_hash();
  std::ofstream f(path, std::ios::trunc);
  f << body.dump(2) << '\n';
  if (!f) throw Error("cannot write " + path.string());
}

int cmd_gen_data(const fs::path& out, std::size_t count, std::size_t size, double dose, double sigma,
                 std::uint64_t seed) {
  if (size == 0 || size % 4 != 0) throw UsageError("--size must be a positive multiple of 4");
  DatasetSpec spec;
  spec.count = count;
  spec.size = size;
  spec.noise.photon_count = dose;
  spec.noise.gaussian_sigma = sigma;
  spec.seed = seed;
  const Dataset ds = write_dataset(out, spec);
  std::printf("wrote %zu train + %zu test pairs to %s\n", ds.train.size(), ds.test.size(), out.c_str());
  return kExitOk;
}

int cmd_train(const fs::path& config_path, const std::string& ablation, const fs::path& out,
              const std::string& resume) {
  TrainConfig cfg = load_config(config_path);
  if (!ablation.empty()) {
    cfg.ablation = AblationConfig::from_id(ablation).id;
    cfg.validate();
  }
  Trainer trainer(cfg, dataset_for(cfg));
  if (!resume.empty()) trainer.load_checkpoint(resume);
  const RunResult r = trainer.train(out);
  if (r.status == RunStatus::kNumericAbort) {
    std::fprintf(stderr, "numeric abort: %s\n", r.message.c_str());
    return kExitNumeric;
  }
  std::printf("%s: %d episodes, held-out PSNR %.4f +- %.4f dB (noisy %.4f), SSIM %.4f, RMSE %.5f\n",
              trainer.agent().ablation.id.c_str(), r.episodes_completed, r.final_eval.mean_psnr,
              r.final_eval.std_psnr, r.final_eval.mean_noisy_psnr, r.final_eval.mean_ssim, r.final_eval.mean_rmse);
  return kExitOk;
}

int cmd_eval(const fs::path& ckpt, const fs::path& data, const fs::path& out, const std::string& split,
             std::size_t png_count) {
  Agent agent = load_agent(ckpt);
  const Dataset ds = load_dataset(data);
  const std::vector<Sample>& samples = split == "train" ? ds.train : ds.test;
  std::vector<Image> outputs;
  const EvalSummary ev = evaluate_agent(agent, samples, &outputs);
  fs::create_directories(out);
  write_eval_csv(out / "eval.csv", ev);
  for (std::size_t i = 0; i < std::min(png_count, samples.size()); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "triptych_%03zu.png", i);
    write_png(out / name, hstack({samples[i].low, outputs[i], samples[i].high}));
  }
  nlohmann::ordered_json m;
  m["command"] = "eval";
  m["checkpoint"] = ckpt.string();
  m["data"] = data.string();
  m["split"] = split;
  m["images"] = ev.rows.size();
  m["psnr_mean"] = ev.mean_psnr;
  m["ssim_mean"] = ev.mean_ssim;
  m["rmse_mean"] = ev.mean_rmse;
  m["infer_ms"] = ev.infer_ms;
  write_manifest(out / "manifest.json", m);
  std::printf("%zu images: PSNR %.4f +- %.4f dB (noisy %.4f), SSIM %.4f, RMSE %.5f\n", ev.rows.size(),
              ev.mean_psnr, ev.std_psnr, ev.mean_noisy_psnr, ev.mean_ssim, ev.mean_rmse);
  return kExitOk;
}

int cmd_denoise(const fs::path& ckpt, const fs::path& in, const fs::path& out, const std::string& png) {
  Agent agent = load_agent(ckpt);
  const TensorArchive ar = TensorArchive::load(in);
  Image result;
  std::string mode;
  if (ar.contains("low") && ar.contains("high")) {
    Sample s;
    load_pair(in, s.low, s.high);
    std::vector<Image> outputs;
    evaluate_agent(agent, {s}, &outputs);
    result = std::move(outputs.front());
    mode = "policy rollout";
  } else {
    const Image low = load_image(in);
    if (low.height % 4 != 0 || low.width % 4 != 0) throw FormatError("image extents must be multiples of 4");
    result = denoise_without_reference(agent, low);
    mode = "fixed passes";
  }
  save_image(out, result);
  if (!png.empty()) write_png(png, result);
  nlohmann::ordered_json m;
  m["command"] = "denoise";
  m["checkpoint"] = ckpt.string();
  m["input"] = in.string();
  m["output"] = out.string();
  m["mode"] = mode;
  write_manifest(out.string() + ".manifest.json", m);
  return kExitOk;
}

int cmd_ablate(const fs::path& config_path, const std::string& ids, const fs::path& out) {
  const TrainConfig cfg = load_config(config_path);
  const std::vector<AblationRow> rows = run_ablation(cfg, parse_ablation_ids(ids), out);
  nlohmann::ordered_json m;
  m["command"] = "ablate";
  m["config"] = config_to_text(cfg);
  m["ids"] = ids;
  write_manifest(out / "manifest.json", m);
  for (const AblationRow& r : rows) {
    std::printf("%-5s PSNR %.4f  SSIM %.4f  RMSE %.5f  p=%.5g %s\n", r.id.c_str(), r.psnr, r.ssim, r.rmse, r.p_psnr,
                r.p_note.c_str());
  }
  return kExitOk;
}

int cmd_report(const fs::path& runs, const fs::path& out, const std::string& ids) {
  const std::vector<AblationRow> rows = build_report(runs, ids.empty() ? std::vector<std::string>{} : parse_ablation_ids(ids));
  write_report_csv(out, rows);
  nlohmann::ordered_json m;
  m["command"] = "report";
  m["runs"] = runs.string();
  m["rows"] = rows.size();
  write_manifest(out.string() + ".manifest.json", m);
  std::printf("wrote %zu rows to %s\n", rows.size(), out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement-learned low-dose CT denoising"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic phantom dataset");
  fs::path gen_out;
  std::size_t gen_count = 100, gen_size = 32;
  double gen_dose = TrainConfig{}.dose, gen_sigma = TrainConfig{}.sigma;
  std::uint64_t gen_seed = 1;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of pairs")->check(CLI::PositiveNumber);
  gen->add_option("--size", gen_size, "Image side (32, 64 or 128)");
  gen->add_option("--dose", gen_dose, "Photon count N0");
  gen->add_option("--sigma", gen_sigma, "Additive Gaussian sigma");
  gen->add_option("--seed", gen_seed, "Base seed");

  auto* train = app.add_subcommand("train", "Train one configuration");
  fs::path train_config, train_out;
  std::string train_ablation, train_resume;
  train->add_option("--config", train_config, "Config file (key = value)")->required()->check(CLI::ExistingFile);
  train->add_option("--ablation", train_ablation, "full or A1..A9");
  train->add_option("--out", train_out, "Run directory")->required();
  train->add_option("--resume", train_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  fs::path eval_ckpt, eval_data, eval_out;
  std::string eval_split = "test";
  std::size_t eval_png = 0;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_option("--split", eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--png", eval_png, "Write this many noisy|denoised|clean PNG triptychs");

  auto* den = app.add_subcommand("denoise", "Denoise one .ednt image");
  fs::path den_ckpt, den_in, den_out;
  std::string den_png;
  den->add_option("--ckpt", den_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  den->add_option("--in", den_in, "Input .ednt (image or low/high pair)")->required()->check(CLI::ExistingFile);
  den->add_option("--out", den_out, "Output .ednt")->required();
  den->add_option("--png", den_png, "Also write an 8-bit PNG here");

  auto* abl = app.add_subcommand("ablate", "Train the full model and the listed ablations");
  fs::path abl_config, abl_out;
  std::string abl_ids;
  abl->add_option("--config", abl_config, "Config file")->required()->check(CLI::ExistingFile);
  abl->add_option("--ids", abl_ids, "Comma-separated ids, e.g. A1,A3,A8")->required();
  abl->add_option("--out", abl_out, "Output directory")->required();

  auto* rep = app.add_subcommand("report", "Merge run directories into one comparison table");
  fs::path rep_runs, rep_out;
  std::string rep_ids;
  rep->add_option("--runs", rep_runs, "Directory holding one sub-directory per run")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--out", rep_out, "Output CSV")->required();
  rep->add_option("--ids", rep_ids, "Ids expected in the table; missing ones are listed as absent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_out, gen_count, gen_size, gen_dose, gen_sigma, gen_seed);
    if (*train) return cmd_train(train_config, train_ablation, train_out, train_resume);
    if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_split, eval_png);
    if (*den) return cmd_denoise(den_ckpt, den_in, den_out, den_png);
    if (*abl) return cmd_ablate(abl_config, abl_ids, abl_out);
    if (*rep) return cmd_report(rep_runs, rep_out, rep_ids);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const DimensionError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
