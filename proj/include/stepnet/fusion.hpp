#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stepnet/metrics.hpp"

namespace stepnet {

// One stream's final-head logits for one clip.
struct LogitRecord {
  std::string clip_id;
  int64_t label = 0;
  std::vector<double> logits;
};

using LogitExport = std::vector<LogitRecord>;

// JSON-lines {clip_id, label, logits}.
void save_logit_export(const std::filesystem::path& path, const LogitExport& records);
LogitExport load_logit_export(const std::filesystem::path& path);

// q_rgb + alpha * q_opt, elementwise.
std::vector<double> late_fuse(std::span<const double> q_rgb, std::span<const double> q_opt,
                              double alpha);

struct FusionRow {
  double alpha = 0.0;
  EvalMetrics metrics;
};

struct FusionReport {
  std::vector<FusionRow> rows;
  double best_alpha = 0.0;  // best top-1 per-instance; ties take the lowest alpha
  EvalMetrics best_metrics;
  std::string rgb_file, opt_file;  // provenance
  uint64_t config_hash = 0;
};

// Fuses the two exports at every alpha in the grid and scores all four
// metrics. The exports must cover identical clip_id sets.
FusionReport alpha_sweep(const LogitExport& rgb, const LogitExport& opt,
                         const std::vector<double>& grid);

std::string format_fusion_table(const FusionReport& report);
std::string fusion_report_json(const FusionReport& report);

}  // namespace stepnet
