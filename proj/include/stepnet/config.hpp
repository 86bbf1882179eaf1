#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stepnet/dataset.hpp"
#include "stepnet/model.hpp"
#include "stepnet/synthetic.hpp"

namespace stepnet {

enum class Precision { single, double_precision };

struct ScheduleConfig {
  int64_t epochs = 30;
  int64_t warmup_epochs = 5;
  int64_t batch_size = 8;
  double lr_peak = 1e-4;
  double lr_floor = 1e-5;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int threads = 0;  // 0 = pick from hardware; results do not depend on it
};

struct FusionConfig {
  double alpha = 0.4;
  std::vector<double> grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

// The single source of truth for one run. Serialized canonically for
// hashing, so identical configs give identical hashes.
struct ExperimentConfig {
  DataConfig data;
  SyntheticSpec synthetic;  // used by gen-data
  ModelConfig model;
  ScheduleConfig schedule;
  FusionConfig fusion;
  Precision precision = Precision::single;
  uint64_t seed = 1;
  bool deterministic = true;

  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& cfg);  // canonical JSON
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);
uint64_t config_hash(const ExperimentConfig& cfg);

// Built-in configurations. desk_config trains the full network on the
// 8-class factorial set in minutes on a CPU; paper_config carries the
// full-scale recipe (valid to construct, not sized for a desk run).
ExperimentConfig desk_config();
ExperimentConfig paper_config();

}  // namespace stepnet
