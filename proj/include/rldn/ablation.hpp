#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rldn/config.hpp"
#include "rldn/trainer.hpp"

namespace rldn {

struct AblationRow {
  std::string id;
  std::string description;
  bool present = false;
  double psnr = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  /// Paired Wilcoxon p-values against the full model on per-image values.
  /// 1 (with `p_note` "insufficient data") when too few pairs differ.
  double p_psnr = 1.0;
  double p_ssim = 1.0;
  double p_rmse = 1.0;
  std::string p_note;
  double train_s_per_episode = 0.0;
  double infer_ms = 0.0;
};

/// Trains "full" plus each id with the same config and seed into
/// out_dir/<id>/ and writes out_dir/ablation.csv.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::vector<std::string>& ids,
                                      const std::filesystem::path& out_dir);

/// Merges the run directories under `runs_dir` (each with final_eval.csv and
/// manifest.json) into one table, full model first. Ids listed in `wanted`
/// but missing on disk come back with present == false. The full model run
/// must exist.
std::vector<AblationRow> build_report(const std::filesystem::path& runs_dir, const std::vector<std::string>& wanted = {});

/// config,description,psnr,ssim,rmse,wilcoxon_p,train_s_per_epoch,infer_ms,
/// wilcoxon_p_ssim,wilcoxon_p_rmse,note
void write_report_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

/// Splits "A1,A3,a8" into canonical ids; rejects unknown ones.
std::vector<std::string> parse_ablation_ids(const std::string& list);

}  // namespace rldn
