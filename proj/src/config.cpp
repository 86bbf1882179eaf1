#include "stepnet/config.hpp"

#include <fstream>

#include <json.hpp>

#include "stepnet/errors.hpp"
#include "stepnet/shapes.hpp"

namespace stepnet {

using nlohmann::json;

namespace {

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json data_to_json(const DataConfig& d) {
  json j;
  j["root"] = d.root.string();
  j["manifest"] = d.manifest;
  j["resize_w"] = d.geometry.resize_w;
  j["resize_h"] = d.geometry.resize_h;
  j["crop"] = d.geometry.crop;
  j["flip_prob"] = d.geometry.flip_prob;
  j["stream"] = d.stream == Stream::flow ? "flow" : "rgb";
  return j;
}

void data_from_json(const json& j, DataConfig& d) {
  std::string root;
  maybe(j, "root", root);
  if (!root.empty()) d.root = root;
  maybe(j, "manifest", d.manifest);
  maybe(j, "resize_w", d.geometry.resize_w);
  maybe(j, "resize_h", d.geometry.resize_h);
  maybe(j, "crop", d.geometry.crop);
  maybe(j, "flip_prob", d.geometry.flip_prob);
  std::string stream = "rgb";
  maybe(j, "stream", stream);
  if (stream == "flow") {
    d.stream = Stream::flow;
  } else if (stream == "rgb") {
    d.stream = Stream::rgb;
  } else {
    throw ConfigError("config: unknown stream '" + stream + "'");
  }
}

json synthetic_to_json(const SyntheticSpec& s) {
  json j;
  j["left_patterns"] = s.left_patterns;
  j["right_patterns"] = s.right_patterns;
  j["textures"] = s.textures;
  j["orders"] = s.orders;
  j["clips_per_class"] = s.clips_per_class;
  j["raw_length"] = s.raw_length;
  j["height"] = s.height;
  j["width"] = s.width;
  j["noise_std"] = s.noise_std;
  j["num_signers"] = s.num_signers;
  j["train_signers"] = s.train_signers;
  j["seed"] = s.seed;
  return j;
}

void synthetic_from_json(const json& j, SyntheticSpec& s) {
  maybe(j, "left_patterns", s.left_patterns);
  maybe(j, "right_patterns", s.right_patterns);
  maybe(j, "textures", s.textures);
  maybe(j, "orders", s.orders);
  maybe(j, "clips_per_class", s.clips_per_class);
  maybe(j, "raw_length", s.raw_length);
  maybe(j, "height", s.height);
  maybe(j, "width", s.width);
  maybe(j, "noise_std", s.noise_std);
  maybe(j, "num_signers", s.num_signers);
  maybe(j, "train_signers", s.train_signers);
  maybe(j, "seed", s.seed);
}

json model_to_json(const ModelConfig& m) {
  json j;
  j["classes"] = m.classes;
  j["t_frames"] = m.t_frames;
  json b;
  b["variant"] = m.backbone.variant == BackboneVariant::pooling_only ? "pooling_only" : "shift_cnn";
  b["in_channels"] = m.backbone.in_channels;
  b["stages"] = m.backbone.stages;
  b["shift_fraction"] = m.backbone.shift_fraction;
  b["out_h"] = m.backbone.out_h;
  b["out_w"] = m.backbone.out_w;
  j["backbone"] = b;
  j["attn_dim"] = m.attn_dim;
  j["seg_hidden"] = m.seg_hidden;
  j["glob_hidden"] = m.glob_hidden;
  j["fused_dim"] = m.fused_dim;
  j["segments"] = {{"count", m.segments.count}, {"length", m.segments.length}};
  j["spatial_branch"] = m.spatial_branch;
  j["temporal_branch"] = m.temporal_branch;
  j["spatial_fusion"] = m.spatial_fusion == SpatialFusion::attention ? "attention" : "concat";
  j["use_grus"] = m.use_grus;
  return j;
}

void model_from_json(const json& j, ModelConfig& m) {
  maybe(j, "classes", m.classes);
  maybe(j, "t_frames", m.t_frames);
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    std::string variant = "shift_cnn";
    maybe(b, "variant", variant);
    if (variant == "pooling_only") {
      m.backbone.variant = BackboneVariant::pooling_only;
    } else if (variant == "shift_cnn") {
      m.backbone.variant = BackboneVariant::shift_cnn;
    } else {
      throw ConfigError("config: unknown backbone variant '" + variant + "'");
    }
    maybe(b, "in_channels", m.backbone.in_channels);
    maybe(b, "stages", m.backbone.stages);
    maybe(b, "shift_fraction", m.backbone.shift_fraction);
    maybe(b, "out_h", m.backbone.out_h);
    maybe(b, "out_w", m.backbone.out_w);
  }
  maybe(j, "attn_dim", m.attn_dim);
  maybe(j, "seg_hidden", m.seg_hidden);
  maybe(j, "glob_hidden", m.glob_hidden);
  maybe(j, "fused_dim", m.fused_dim);
  if (j.contains("segments")) {
    maybe(j.at("segments"), "count", m.segments.count);
    maybe(j.at("segments"), "length", m.segments.length);
  }
  maybe(j, "spatial_branch", m.spatial_branch);
  maybe(j, "temporal_branch", m.temporal_branch);
  std::string fusion = "attention";
  maybe(j, "spatial_fusion", fusion);
  if (fusion == "concat") {
    m.spatial_fusion = SpatialFusion::concat;
  } else if (fusion == "attention") {
    m.spatial_fusion = SpatialFusion::attention;
  } else {
    throw ConfigError("config: unknown spatial_fusion '" + fusion + "'");
  }
  maybe(j, "use_grus", m.use_grus);
}

json schedule_to_json(const ScheduleConfig& s) {
  json j;
  j["epochs"] = s.epochs;
  j["warmup_epochs"] = s.warmup_epochs;
  j["batch_size"] = s.batch_size;
  j["lr_peak"] = s.lr_peak;
  j["lr_floor"] = s.lr_floor;
  j["weight_decay"] = s.weight_decay;
  j["beta1"] = s.beta1;
  j["beta2"] = s.beta2;
  j["eps"] = s.eps;
  j["threads"] = s.threads;
  return j;
}

void schedule_from_json(const json& j, ScheduleConfig& s) {
  maybe(j, "epochs", s.epochs);
  maybe(j, "warmup_epochs", s.warmup_epochs);
  maybe(j, "batch_size", s.batch_size);
  maybe(j, "lr_peak", s.lr_peak);
  maybe(j, "lr_floor", s.lr_floor);
  maybe(j, "weight_decay", s.weight_decay);
  maybe(j, "beta1", s.beta1);
  maybe(j, "beta2", s.beta2);
  maybe(j, "eps", s.eps);
  maybe(j, "threads", s.threads);
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  if (schedule.epochs < 1 || schedule.batch_size < 1) {
    throw ConfigError("config: epochs and batch_size must be positive");
  }
  if (schedule.warmup_epochs < 0 || schedule.warmup_epochs > schedule.epochs) {
    throw ConfigError("config: warmup_epochs must lie within the epoch budget");
  }
  if (schedule.lr_peak <= 0.0 || schedule.lr_floor < 0.0 || schedule.lr_floor > schedule.lr_peak) {
    throw ConfigError("config: need 0 <= lr_floor <= lr_peak and lr_peak > 0");
  }
  if (data.geometry.crop > data.geometry.resize_w || data.geometry.crop > data.geometry.resize_h) {
    throw ConfigError("config: crop larger than resize target");
  }
  for (size_t i = 1; i < fusion.grid.size(); ++i) {
    if (fusion.grid[i] <= fusion.grid[i - 1]) {
      throw ConfigError("config: fusion grid must be strictly increasing");
    }
  }
  const int64_t expect_channels = data.stream == Stream::flow ? 10 : 3;
  if (model.backbone.in_channels != expect_channels) {
    throw ConfigError("config: backbone in_channels " + std::to_string(model.backbone.in_channels) +
                      " does not match stream (" + std::to_string(expect_channels) + " expected)");
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: bad JSON in " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg = desk_config();
  if (j.contains("data")) {
    data_from_json(j.at("data"), cfg.data);
    if (j.at("data").contains("synthetic")) synthetic_from_json(j.at("data").at("synthetic"), cfg.synthetic);
  }
  if (j.contains("model")) model_from_json(j.at("model"), cfg.model);
  if (j.contains("schedule")) schedule_from_json(j.at("schedule"), cfg.schedule);
  if (j.contains("fusion")) {
    maybe(j.at("fusion"), "alpha", cfg.fusion.alpha);
    maybe(j.at("fusion"), "grid", cfg.fusion.grid);
  }
  std::string precision = "single";
  maybe(j, "precision", precision);
  if (precision == "double") {
    cfg.precision = Precision::double_precision;
  } else if (precision == "single") {
    cfg.precision = Precision::single;
  } else {
    throw ConfigError("config: unknown precision '" + precision + "'");
  }
  maybe(j, "seed", cfg.seed);
  maybe(j, "deterministic", cfg.deterministic);
  cfg.validate();
  return cfg;
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j;
  json data = data_to_json(cfg.data);
  data["synthetic"] = synthetic_to_json(cfg.synthetic);
  j["data"] = data;
  j["model"] = model_to_json(cfg.model);
  j["schedule"] = schedule_to_json(cfg.schedule);
  j["fusion"] = {{"alpha", cfg.fusion.alpha}, {"grid", cfg.fusion.grid}};
  j["precision"] = cfg.precision == Precision::double_precision ? "double" : "single";
  j["seed"] = cfg.seed;
  j["deterministic"] = cfg.deterministic;
  return j.dump(2);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw IoError("config: cannot write " + path.string());
  os << dump_config(cfg) << '\n';
}

uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string dump = dump_config(cfg);
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

ExperimentConfig desk_config() {
  ExperimentConfig cfg;
  cfg.data.root = "data/synth8";
  cfg.data.geometry = {34, 34, 32, 0.0};
  cfg.data.stream = Stream::rgb;
  cfg.synthetic = SyntheticSpec{};
  cfg.synthetic.textures = 1;
  cfg.synthetic.orders = 2;
  cfg.model.classes = 8;
  cfg.model.t_frames = 16;
  cfg.model.backbone.variant = BackboneVariant::shift_cnn;
  cfg.model.backbone.in_channels = 3;
  cfg.model.backbone.stages = {8, 16, 32};
  cfg.model.backbone.shift_fraction = 0.125;
  cfg.model.backbone.out_h = 4;
  cfg.model.backbone.out_w = 4;
  cfg.model.segments = {3, 8};
  cfg.schedule.epochs = 26;
  cfg.schedule.warmup_epochs = 2;
  cfg.schedule.batch_size = 4;
  cfg.schedule.lr_peak = 2e-3;
  cfg.schedule.lr_floor = 2e-4;
  cfg.schedule.weight_decay = 0.05;
  cfg.precision = Precision::single;
  cfg.seed = 1;
  return cfg;
}

ExperimentConfig paper_config() {
  ExperimentConfig cfg;
  cfg.data.root = "data/full";
  cfg.data.geometry = {320, 256, 256, 0.5};
  cfg.data.stream = Stream::rgb;
  cfg.model = paper_scale_config();
  cfg.schedule.epochs = 100;
  cfg.schedule.warmup_epochs = 5;
  cfg.schedule.batch_size = 8;
  cfg.schedule.lr_peak = 1e-4;
  cfg.schedule.lr_floor = 1e-5;
  cfg.schedule.weight_decay = 0.1;
  cfg.precision = Precision::single;
  cfg.seed = 1;
  return cfg;
}

}  // namespace stepnet
