#include "rldn/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rldn/errors.hpp"
#include "rldn/wilcoxon.hpp"

namespace rldn {

namespace fs = std::filesystem;

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool is_run_dir(const fs::path& dir) {
  return fs::is_regular_file(dir / "final_eval.csv") && fs::is_regular_file(dir / "manifest.json");
}

struct Run {
  std::string id;
  std::string description;
  EvalSummary eval;
  double train_s_per_episode = 0.0;
  double infer_ms = 0.0;
};

Run read_run(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  Run r;
  r.id = AblationConfig::from_id(m.value("ablation", std::string("full"))).id;
  r.description = m.value("description", std::string());
  r.train_s_per_episode = m.value("seconds_per_episode", 0.0);
  r.infer_ms = m.value("infer_ms", 0.0);
  r.eval = read_eval_csv(dir / "final_eval.csv");
  return r;
}

double paired_p(const EvalSummary& variant, const EvalSummary& full, double metrics::QualityReport::*field,
                std::string& note) {
  std::vector<double> a, b;
  for (std::size_t i = 0; i < variant.rows.size(); ++i) {
    a.push_back(variant.rows[i].denoised.*field);
    b.push_back(full.rows[i].denoised.*field);
  }
  try {
    return metrics::wilcoxon_signed_rank(a, b).p_value;
  } catch (const InsufficientDataError&) {
    note = "insufficient data";
    return 1.0;
  }
}

}  // namespace

std::vector<std::string> parse_ablation_ids(const std::string& list) {
  std::vector<std::string> ids;
  std::istringstream in(list);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string id = AblationConfig::from_id(item).id;
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  return ids;
}

std::vector<AblationRow> build_report(const fs::path& runs_dir, const std::vector<std::string>& wanted) {
  if (!fs::is_directory(runs_dir)) throw UsageError("runs directory not found: " + runs_dir.string());
  std::vector<Run> runs;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.is_directory() && is_run_dir(entry.path())) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const fs::path& d : dirs) {
    Run r = read_run(d);
    if (std::any_of(runs.begin(), runs.end(), [&](const Run& x) { return x.id == r.id; })) {
      throw FormatError("two runs for configuration " + r.id + " under " + runs_dir.string());
    }
    runs.push_back(std::move(r));
  }
  auto full = std::find_if(runs.begin(), runs.end(), [](const Run& r) { return r.id == "full"; });
  if (full == runs.end()) throw FormatError("no full-model run under " + runs_dir.string());

  std::vector<AblationRow> rows;
  for (const std::string& id : ablation_ids()) {
    auto it = std::find_if(runs.begin(), runs.end(), [&](const Run& r) { return r.id == id; });
    const bool requested = std::find(wanted.begin(), wanted.end(), id) != wanted.end();
    if (it == runs.end()) {
      if (requested) {
        AblationRow absent;
        absent.id = id;
        absent.description = AblationConfig::from_id(id).description;
        absent.p_note = "absent";
        rows.push_back(absent);
      }
      continue;
    }
    AblationRow row;
    row.id = it->id;
    row.description = it->description;
    row.present = true;
    row.psnr = it->eval.mean_psnr;
    row.ssim = it->eval.mean_ssim;
    row.rmse = it->eval.mean_rmse;
    row.train_s_per_episode = it->train_s_per_episode;
    row.infer_ms = it->infer_ms;
    if (it->id == "full") {
      row.p_note = "reference";
    } else {
      if (it->eval.rows.size() != full->eval.rows.size()) {
        throw FormatError("run " + it->id + " was evaluated on a different image set than the full model");
      }
      for (std::size_t i = 0; i < it->eval.rows.size(); ++i) {
        if (it->eval.rows[i].seed != full->eval.rows[i].seed) {
          throw FormatError("run " + it->id + " was evaluated on a different image set than the full model");
        }
      }
      row.p_psnr = paired_p(it->eval, full->eval, &metrics::QualityReport::psnr_db, row.p_note);
      row.p_ssim = paired_p(it->eval, full->eval, &metrics::QualityReport::ssim, row.p_note);
      row.p_rmse = paired_p(it->eval, full->eval, &metrics::QualityReport::rmse, row.p_note);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_report_csv(const fs::path& path, const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "config,description,psnr,ssim,rmse,wilcoxon_p,train_s_per_epoch,infer_ms,wilcoxon_p_ssim,wilcoxon_p_rmse,note\n";
  for (const AblationRow& r : rows) {
    out << r.id << ',' << csv_quote(r.description) << ',';
    if (!r.present) {
      out << ",,,,,,,," << r.p_note << '\n';
      continue;
    }
    const bool ref = r.id == "full";
    out << g17(r.psnr) << ',' << g17(r.ssim) << ',' << g17(r.rmse) << ',' << (ref ? "" : g17(r.p_psnr)) << ','
        << g17(r.train_s_per_episode) << ',' << g17(r.infer_ms) << ',' << (ref ? "" : g17(r.p_ssim)) << ','
        << (ref ? "" : g17(r.p_rmse)) << ',' << r.p_note << '\n';
  }
  std::ofstream f(path, std::ios::trunc);
  f << out.str();
  if (!f) throw Error("cannot write " + path.string());
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const std::vector<std::string>& ids,
                                      const fs::path& out_dir) {
  std::vector<std::string> all = {"full"};
  for (const std::string& id : ids) {
    const std::string canon = AblationConfig::from_id(id).id;
    if (std::find(all.begin(), all.end(), canon) == all.end()) all.push_back(canon);
  }
  const Dataset data = dataset_for(base);
  for (const std::string& id : all) {
    TrainConfig cfg = base;
    cfg.ablation = id;
    Trainer trainer(cfg, data);
    const RunResult r = trainer.train(out_dir / id);
    if (r.status != RunStatus::kCompleted) throw NumericError("ablation " + id + ": " + r.message);
  }
  std::vector<AblationRow> rows = build_report(out_dir, all);
  write_report_csv(out_dir / "ablation.csv", rows);
  return rows;
}

}  // namespace rldn
