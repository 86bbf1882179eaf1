#include "stepnet/shapes.hpp"

#include <map>

namespace stepnet {

std::vector<NamedShape> propagate_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t t = cfg.t_frames;
  const int64_t c = cfg.channels();
  const int64_t d = cfg.d_attn();
  const SegmentPlan plan = plan_segments(t, cfg.segments.count, cfg.segments.length);

  std::vector<NamedShape> out;
  out.push_back({"M", {t, c, cfg.backbone.out_h, cfg.backbone.out_w}});
  out.push_back({"f_s", {t, d}});
  out.push_back({"f_t", {t, d}});
  out.push_back({"f_st", {t, cfg.d_fused()}});
  out.push_back({"h_l", {t, c}});
  out.push_back({"h_r", {t, c}});
  out.push_back({"h_t", {t, c}});
  out.push_back({"h_b", {t, c}});
  out.push_back({"g_lr", {t, c}});
  out.push_back({"g_tb", {t, c}});
  out.push_back({"g_sg", {t, c}});
  for (int64_t n = 0; n < plan.count; ++n) {
    out.push_back({"g_" + std::to_string(n + 1),
                   {plan.length, cfg.use_grus ? cfg.d_seg() : c}});
  }
  out.push_back({"g_t", {t, cfg.use_grus ? cfg.d_glob() : c}});
  return out;
}

std::vector<NamedShape> reference_shape_table() {
  return {
      {"M", {16, 2048, 16, 16}}, {"f_s", {16, 1024}},  {"f_t", {16, 1024}}, {"f_st", {16, 2048}},
      {"h_l", {16, 2048}},       {"h_r", {16, 2048}},  {"h_t", {16, 2048}}, {"h_b", {16, 2048}},
      {"g_lr", {16, 2048}},      {"g_tb", {16, 2048}}, {"g_sg", {16, 2048}}, {"g_1", {8, 1024}},
      {"g_2", {8, 1024}},        {"g_3", {8, 1024}},   {"g_t", {16, 2048}},
  };
}

ModelConfig paper_scale_config() {
  ModelConfig cfg;
  cfg.classes = 2000;
  cfg.t_frames = 16;
  cfg.backbone.variant = BackboneVariant::shift_cnn;
  cfg.backbone.in_channels = 3;
  cfg.backbone.stages = {64, 256, 1024, 2048};
  cfg.backbone.shift_fraction = 0.125;
  cfg.backbone.out_h = 16;
  cfg.backbone.out_w = 16;
  cfg.segments = {3, 8};
  // attn 1024, seg hidden 1024, glob hidden 2048, fused 2048: the C-derived
  // defaults, spelled out for clarity
  cfg.attn_dim = 1024;
  cfg.seg_hidden = 1024;
  cfg.glob_hidden = 2048;
  cfg.fused_dim = 2048;
  return cfg;
}

std::string format_shape_line(const NamedShape& s) {
  return s.name + ": " + shape_str(s.dims);
}

std::vector<std::string> diff_shapes(const std::vector<NamedShape>& got,
                                     const std::vector<NamedShape>& expected) {
  std::map<std::string, Shape> by_name;
  for (const auto& g : got) by_name[g.name] = g.dims;
  std::vector<std::string> mismatches;
  for (const auto& e : expected) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      mismatches.push_back(e.name + ": missing (expected " + shape_str(e.dims) + ")");
    } else if (it->second != e.dims) {
      mismatches.push_back(e.name + ": got " + shape_str(it->second) + ", expected " +
                           shape_str(e.dims));
    }
  }
  return mismatches;
}

}  // namespace stepnet
