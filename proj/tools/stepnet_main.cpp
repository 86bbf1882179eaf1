#include <CLI11.hpp>
#include <iostream>

#include "stepnet/gradsuite.hpp"
#include "stepnet/shapes.hpp"
#include "stepnet/trainer.hpp"

using namespace stepnet;

namespace {

struct GlobalArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  bool deterministic = false;
};

ExperimentConfig resolve_config(const GlobalArgs& g) {
  ExperimentConfig cfg = g.config_path.empty() ? desk_config() : load_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  if (g.deterministic) cfg.deterministic = true;
  return cfg;
}

template <class Real>
int eval_command(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                 const std::string& split, const std::string& export_path) {
  ClipDataset ds = ClipDataset::load(cfg.data, split, cfg.model.t_frames);
  StepNet<Real> model(cfg.model, cfg.seed);
  AdamW<Real> opt(model.params(), {});
  const CheckpointMeta meta = load_checkpoint<Real>(checkpoint_path, model.params(), opt);
  if (meta.config_hash != config_hash(cfg)) {
    std::cerr << "warning: checkpoint was written under a different config hash\n";
  }
  const int threads = resolve_threads(cfg.schedule.threads);
  LogitExport records = export_logits(model, ds, cfg.seed, threads);
  if (!export_path.empty()) save_logit_export(export_path, records);

  std::vector<std::vector<double>> logits;
  std::vector<int64_t> labels;
  for (auto& r : records) {
    logits.push_back(r.logits);
    labels.push_back(r.label);
  }
  const EvalMetrics m = compute_metrics(logits, labels);
  nlohmann::json j;
  j["split"] = split;
  j["clips"] = records.size();
  j["top1_pi"] = m.top1_pi;
  j["top5_pi"] = m.top5_pi;
  j["top1_pc"] = m.top1_pc;
  j["top5_pc"] = m.top5_pc;
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StepNet: part-aware sign video classifier"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalArgs global;
  app.add_option("--config", global.config_path, "JSON config file");
  app.add_option("--seed", global.seed, "override the config seed")->each([&](const std::string&) {
    global.seed_set = true;
  });
  app.add_flag("--deterministic", global.deterministic, "force the deterministic path");

  auto* gen = app.add_subcommand("gen-data", "render the synthetic dataset from the config spec");
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory (default: data root from config)");

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_out = "runs/default";
  std::string resume;
  train->add_option("--out", train_out, "output directory for log + checkpoints");
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ckpt, split = "test", export_path;
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  eval->add_option("--split", split, "train|test");
  eval->add_option("--export-logits", export_path, "write per-clip logits (JSON lines)");

  auto* fuse = app.add_subcommand("fuse", "two-stream late fusion over exported logits");
  std::string rgb_path, opt_path, fuse_json;
  double alpha = -1.0;
  bool sweep = false;
  fuse->add_option("--rgb", rgb_path, "RGB-stream logit export")->required();
  fuse->add_option("--opt", opt_path, "flow-stream logit export")->required();
  fuse->add_option("--alpha", alpha, "single fusion weight");
  fuse->add_flag("--sweep", sweep, "sweep the config grid and report the best alpha");
  fuse->add_option("--json", fuse_json, "also write the report as JSON");

  auto* shapes = app.add_subcommand("shapes", "print named tensor shapes");
  bool paper_scale = false;
  shapes->add_flag("--paper-scale", paper_scale, "use full-scale dims and diff against the reference table");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference suite over all primitives");
  int points = 3;
  gradcheck->add_option("--points", points, "random points per primitive");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = resolve_config(global);
      const std::filesystem::path out =
          gen_out.empty() ? cfg.data.root : std::filesystem::path(gen_out);
      const Manifest m = generate_synthetic(cfg.synthetic, out);
      std::cout << "wrote " << m.entries.size() << " clips (" << m.num_classes << " classes) to "
                << out.string() << '\n';
      return 0;
    }
    if (train->parsed()) {
      ExperimentConfig cfg = resolve_config(global);
      std::filesystem::create_directories(train_out);
      save_config(std::filesystem::path(train_out) / "config.json",
                  cfg);  // provenance next to the log
      const TrainResult r = run_training(cfg, train_out, resume);
      std::cout << "trained " << r.epochs_run << " epochs; best top1_pi " << r.best_top1
                << "; log " << r.log_path.string() << '\n';
      return 0;
    }
    if (eval->parsed()) {
      ExperimentConfig cfg = resolve_config(global);
      if (split != "train" && split != "test") throw ConfigError("eval: unknown split '" + split + "'");
      if (cfg.precision == Precision::double_precision) {
        return eval_command<double>(cfg, ckpt, split, export_path);
      }
      return eval_command<float>(cfg, ckpt, split, export_path);
    }
    if (fuse->parsed()) {
      ExperimentConfig cfg = resolve_config(global);
      const LogitExport rgb = load_logit_export(rgb_path);
      const LogitExport opt = load_logit_export(opt_path);
      std::vector<double> grid;
      if (sweep) {
        grid = cfg.fusion.grid;
      } else {
        grid = {alpha < 0.0 ? cfg.fusion.alpha : alpha};
      }
      FusionReport report = alpha_sweep(rgb, opt, grid);
      report.rgb_file = rgb_path;
      report.opt_file = opt_path;
      report.config_hash = config_hash(cfg);
      std::cout << format_fusion_table(report);
      if (sweep) std::cout << "best alpha: " << report.best_alpha << '\n';
      if (!fuse_json.empty()) {
        std::ofstream os(fuse_json);
        if (!os) throw IoError("fuse: cannot write " + fuse_json);
        os << fusion_report_json(report) << '\n';
      }
      return 0;
    }
    if (shapes->parsed()) {
      const ModelConfig cfg =
          paper_scale ? paper_scale_config() : resolve_config(global).model;
      const std::vector<NamedShape> got = propagate_shapes(cfg);
      for (const auto& s : got) std::cout << format_shape_line(s) << '\n';
      if (paper_scale) {
        const std::vector<std::string> mismatches = diff_shapes(got, reference_shape_table());
        if (!mismatches.empty()) {
          for (const auto& m : mismatches) std::cerr << "MISMATCH " << m << '\n';
          return 1;
        }
        std::cout << "all shapes match the reference table\n";
      }
      return 0;
    }
    if (gradcheck->parsed()) {
      const std::vector<SuiteEntry> entries = run_gradient_suite(points);
      double worst = 0.0;
      for (const auto& e : entries) {
        std::cout << e.name << ": max rel err " << e.max_rel_err << '\n';
        worst = std::max(worst, e.max_rel_err);
      }
      std::cout << "suite max rel err: " << worst << '\n';
      if (worst > 1e-4) {
        std::cerr << "gradcheck failed: " << worst << " > 1e-4\n";
        return 2;
      }
      return 0;
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
