#include <doctest.h>

#include "stepnet/gradsuite.hpp"
#include "stepnet/shapes.hpp"

using namespace stepnet;

TEST_CASE("paper-scale propagation matches the reference table") {
  const std::vector<NamedShape> got = propagate_shapes(paper_scale_config());
  const std::vector<std::string> mismatches = diff_shapes(got, reference_shape_table());
  for (const auto& m : mismatches) {
    INFO(m);
  }
  CHECK(mismatches.empty());
}

TEST_CASE("shape lines format as name: AxBxC") {
  const std::vector<NamedShape> got = propagate_shapes(paper_scale_config());
  bool saw_m = false, saw_fst = false;
  for (const auto& s : got) {
    const std::string line = format_shape_line(s);
    if (line == "M: 16x2048x16x16") saw_m = true;
    if (line == "f_st: 16x2048") saw_fst = true;
  }
  CHECK(saw_m);
  CHECK(saw_fst);
}

TEST_CASE("symbolic shapes agree with a real forward pass at desk dims") {
  ModelConfig cfg = gradcheck_model_config();
  StepNet<double> model(cfg, 7);
  Tape<double> tape;
  Tensor<double> clip({cfg.t_frames, cfg.backbone.in_channels, 8, 8});
  ForwardOut<double> fwd = model.forward(tape, std::move(clip), false, false);

  const std::vector<NamedShape> symbolic = propagate_shapes(cfg);
  auto find = [&](const std::string& name) -> Shape {
    for (const auto& s : symbolic) {
      if (s.name == name) return s.dims;
    }
    FAIL("missing symbolic shape ", name);
    return {};
  };
  CHECK(fwd.m.value().shape() == find("M"));
  CHECK(fwd.parts.h_l.value().shape() == find("h_l"));
  CHECK(fwd.parts.h_r.value().shape() == find("h_r"));
  CHECK(fwd.parts.h_t.value().shape() == find("h_t"));
  CHECK(fwd.parts.h_b.value().shape() == find("h_b"));
  CHECK(fwd.parts.g_sg.value().shape() == find("g_sg"));
  CHECK(fwd.g_lr.value().shape() == find("g_lr"));
  CHECK(fwd.g_tb.value().shape() == find("g_tb"));
  CHECK(fwd.f_s.value().shape() == find("f_s"));
  CHECK(fwd.f_t.value().shape() == find("f_t"));
  CHECK(fwd.f_st.value().shape() == find("f_st"));
  REQUIRE(fwd.g_seg.size() == 2);
  CHECK(fwd.g_seg[0].value().shape() == find("g_1"));
  CHECK(fwd.g_seg[1].value().shape() == find("g_2"));
  CHECK(fwd.g_t.value().shape() == find("g_t"));
  for (int i = 0; i < kHeadCount; ++i) {
    REQUIRE(fwd.bundle.slots[static_cast<size_t>(i)].has_value());
    CHECK((*fwd.bundle.slots[static_cast<size_t>(i)]).value().shape() == Shape{1, cfg.classes});
  }
}

TEST_CASE("ablation configs drop the matching heads") {
  ModelConfig cfg = gradcheck_model_config();
  cfg.spatial_branch = false;
  StepNet<double> temporal_only(cfg, 3);
  Tape<double> tape;
  ForwardOut<double> fwd =
      temporal_only.forward(tape, Tensor<double>({cfg.t_frames, 3, 8, 8}), false, false);
  CHECK_FALSE(fwd.bundle[HeadId::q_left].has_value());
  CHECK_FALSE(fwd.bundle[HeadId::q_s].has_value());
  CHECK_FALSE(fwd.bundle[HeadId::q_st].has_value());
  CHECK(fwd.bundle[HeadId::q_sg].has_value());
  CHECK(fwd.bundle[HeadId::q_temp].has_value());
  CHECK(prediction_head(fwd.bundle) == HeadId::q_temp);

  ModelConfig global_cfg = gradcheck_model_config();
  global_cfg.spatial_branch = false;
  global_cfg.temporal_branch = false;
  StepNet<double> global_only(global_cfg, 3);
  Tape<double> tape2;
  ForwardOut<double> fwd2 =
      global_only.forward(tape2, Tensor<double>({cfg.t_frames, 3, 8, 8}), false, false);
  CHECK(prediction_head(fwd2.bundle) == HeadId::q_sg);
  int present = 0;
  for (const auto& slot : fwd2.bundle.slots) present += slot.has_value() ? 1 : 0;
  CHECK(present == 1);
}

TEST_CASE("concat spatial fusion variant runs") {
  ModelConfig cfg = gradcheck_model_config();
  cfg.spatial_fusion = SpatialFusion::concat;
  StepNet<double> model(cfg, 5);
  Tape<double> tape;
  ForwardOut<double> fwd = model.forward(tape, Tensor<double>({cfg.t_frames, 3, 8, 8}), false, false);
  CHECK(fwd.f_s.value().shape() == Shape{cfg.t_frames, cfg.d_attn()});
  CHECK(fwd.bundle[HeadId::q_st].has_value());
}

TEST_CASE("no-GRU ablation keeps the attention interface") {
  ModelConfig cfg = gradcheck_model_config();
  cfg.use_grus = false;
  StepNet<double> model(cfg, 5);
  Tape<double> tape;
  ForwardOut<double> fwd = model.forward(tape, Tensor<double>({cfg.t_frames, 3, 8, 8}), false, false);
  // segments are the raw pooled slices
  CHECK(fwd.g_seg[0].value().shape() == Shape{cfg.segments.length, cfg.channels()});
  CHECK(fwd.f_t.value().shape() == Shape{cfg.t_frames, cfg.d_attn()});
}
