#include "stepnet/fusion.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stepnet/errors.hpp"

namespace stepnet {

using nlohmann::json;

void save_logit_export(const std::filesystem::path& path, const LogitExport& records) {
  std::ofstream os(path);
  if (!os) throw IoError("logit export: cannot write " + path.string());
  for (const auto& r : records) {
    json j;
    j["clip_id"] = r.clip_id;
    j["label"] = r.label;
    j["logits"] = r.logits;
    os << j.dump() << '\n';
  }
}

LogitExport load_logit_export(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("logit export: cannot open " + path.string());
  LogitExport out;
  std::set<std::string> seen;
  size_t width = 0;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("logit export: bad JSON at line " + std::to_string(line_no) + ": " + e.what());
    }
    LogitRecord r;
    r.clip_id = j.at("clip_id").get<std::string>();
    r.label = j.at("label").get<int64_t>();
    r.logits = j.at("logits").get<std::vector<double>>();
    if (!seen.insert(r.clip_id).second) {
      throw ConfigError("logit export: duplicate clip_id '" + r.clip_id + "'");
    }
    if (width == 0) width = r.logits.size();
    if (r.logits.empty() || r.logits.size() != width) {
      throw ConfigError("logit export: inconsistent logit width at line " + std::to_string(line_no));
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ConfigError("logit export: no records in " + path.string());
  return out;
}

std::vector<double> late_fuse(std::span<const double> q_rgb, std::span<const double> q_opt,
                              double alpha) {
  if (q_rgb.size() != q_opt.size()) {
    throw ShapeError("late_fuse: logit length mismatch " + std::to_string(q_rgb.size()) + " vs " +
                     std::to_string(q_opt.size()));
  }
  std::vector<double> out(q_rgb.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = q_rgb[i] + alpha * q_opt[i];
  return out;
}

FusionReport alpha_sweep(const LogitExport& rgb, const LogitExport& opt,
                         const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("alpha_sweep: empty grid");
  for (size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw ConfigError("alpha_sweep: grid must be strictly increasing");
  }

  std::map<std::string, const LogitRecord*> by_id;
  for (const auto& r : opt) by_id[r.clip_id] = &r;
  std::vector<std::string> missing_in_opt, missing_in_rgb;
  std::set<std::string> rgb_ids;
  for (const auto& r : rgb) {
    rgb_ids.insert(r.clip_id);
    if (!by_id.count(r.clip_id)) missing_in_opt.push_back(r.clip_id);
  }
  for (const auto& r : opt) {
    if (!rgb_ids.count(r.clip_id)) missing_in_rgb.push_back(r.clip_id);
  }
  if (!missing_in_opt.empty() || !missing_in_rgb.empty()) {
    std::ostringstream os;
    os << "alpha_sweep: clip_id sets differ;";
    if (!missing_in_opt.empty()) {
      os << " only in rgb:";
      for (const auto& id : missing_in_opt) os << ' ' << id;
    }
    if (!missing_in_rgb.empty()) {
      os << " only in opt:";
      for (const auto& id : missing_in_rgb) os << ' ' << id;
    }
    throw ConfigError(os.str());
  }

  FusionReport report;
  std::vector<int64_t> labels;
  labels.reserve(rgb.size());
  for (const auto& r : rgb) labels.push_back(r.label);

  bool first = true;
  for (double alpha : grid) {
    std::vector<std::vector<double>> fused;
    fused.reserve(rgb.size());
    for (const auto& r : rgb) {
      const LogitRecord* o = by_id.at(r.clip_id);
      fused.push_back(late_fuse(r.logits, o->logits, alpha));
    }
    FusionRow row{alpha, compute_metrics(fused, labels)};
    if (first || row.metrics.top1_pi > report.best_metrics.top1_pi) {
      report.best_alpha = alpha;
      report.best_metrics = row.metrics;
      first = false;
    }
    report.rows.push_back(row);
  }
  return report;
}

std::string format_fusion_table(const FusionReport& report) {
  std::ostringstream os;
  os << "alpha   top1_pi  top5_pi  top1_pc  top5_pc\n";
  os.setf(std::ios::fixed);
  os.precision(2);
  for (const auto& row : report.rows) {
    os << row.alpha << "    " << row.metrics.top1_pi << "    " << row.metrics.top5_pi << "    "
       << row.metrics.top1_pc << "    " << row.metrics.top5_pc;
    if (row.alpha == report.best_alpha) os << "  <- best";
    os << '\n';
  }
  return os.str();
}

std::string fusion_report_json(const FusionReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"alpha", row.alpha},
                    {"top1_pi", row.metrics.top1_pi},
                    {"top5_pi", row.metrics.top5_pi},
                    {"top1_pc", row.metrics.top1_pc},
                    {"top5_pc", row.metrics.top5_pc}});
  }
  json j;
  j["rows"] = rows;
  j["best_alpha"] = report.best_alpha;
  j["provenance"] = {{"rgb", report.rgb_file},
                     {"opt", report.opt_file},
                     {"config_hash", report.config_hash}};
  return j.dump(2);
}

}  // namespace stepnet
