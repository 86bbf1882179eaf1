#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stepnet/backbone.hpp"
#include "stepnet/heads.hpp"
#include "stepnet/rng.hpp"
#include "stepnet/temporal.hpp"

namespace stepnet {

enum class SpatialFusion { attention, concat };

struct SegmentSpec {
  int64_t count = 3;
  int64_t length = 8;
};

// Everything that determines the network topology. Widths left at 0 derive
// from the backbone channel count C: attention d = C/2, segment GRU hidden
// C/2, global GRU hidden C, fused width C.
struct ModelConfig {
  int64_t classes = 8;
  int64_t t_frames = 16;
  BackboneConfig backbone;
  int64_t attn_dim = 0;
  int64_t seg_hidden = 0;
  int64_t glob_hidden = 0;
  int64_t fused_dim = 0;
  SegmentSpec segments;
  bool spatial_branch = true;
  bool temporal_branch = true;
  SpatialFusion spatial_fusion = SpatialFusion::attention;
  bool use_grus = true;

  int64_t channels() const { return backbone.out_channels(); }
  int64_t d_attn() const { return attn_dim > 0 ? attn_dim : channels() / 2; }
  int64_t d_seg() const { return seg_hidden > 0 ? seg_hidden : channels() / 2; }
  int64_t d_glob() const { return glob_hidden > 0 ? glob_hidden : channels(); }
  int64_t d_fused() const { return fused_dim > 0 ? fused_dim : channels(); }

  void validate() const {
    backbone.validate();
    if (classes < 2) throw ConfigError("model: need at least 2 classes");
    if (t_frames < 1) throw ConfigError("model: t_frames must be positive");
    if (channels() < 4) throw ConfigError("model: backbone width below 4 leaves no gate bottleneck");
    if (temporal_branch) plan_segments(t_frames, segments.count, segments.length);
  }
};

// Named parameter tensors in a stable registration order. The order is the
// serialization order and the optimizer's iteration order.
template <class Real>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<Real> value;
  };
  std::vector<Entry> entries;

  int add(std::string name, Tensor<Real> value) {
    entries.push_back({std::move(name), std::move(value)});
    return static_cast<int>(entries.size()) - 1;
  }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.numel();
    return n;
  }
};

// All named intermediates of one forward pass, for tests and export.
template <class Real>
struct ForwardOut {
  Var<Real> clip;  // input leaf
  Var<Real> m;     // backbone feature map
  SpatialParts<Real> parts;
  Var<Real> g_lr, g_tb, f_s;
  Var<Real> pooled;
  std::vector<Var<Real>> g_seg;
  Var<Real> g_t, f_t, f_st;
  LogitBundle<Real> bundle;
  std::vector<Var<Real>> param_vars;  // aligned with ParamStore entries
  bool has_spatial = false, has_temporal = false;
};

namespace detail {

template <class Real>
Tensor<Real> xavier(Rng& rng, Shape shape, int64_t fan_in, int64_t fan_out) {
  Tensor<Real> t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(rng.uniform(-a, a));
  return t;
}

// He-style uniform init for weights feeding ReLU stacks.
template <class Real>
Tensor<Real> he_uniform(Rng& rng, Shape shape, int64_t fan_in) {
  Tensor<Real> t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Real>(rng.uniform(-a, a));
  return t;
}

}  // namespace detail

// The full network: backbone, both part-level branches, fusion, ten heads.
// Parameters live in the store; each forward pass re-inserts them as tape
// leaves so one model can serve many tapes.
template <class Real>
class StepNet {
 public:
  StepNet(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(Rng::derive(seed, {0x1217a7a}));
    build_params(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  // clip: T x in_channels x H x W. If train_input is true the clip leaf also
  // collects gradients (used by the gradient checks).
  ForwardOut<Real> forward(Tape<Real>& tape, Tensor<Real> clip, bool params_require_grad = true,
                           bool input_requires_grad = false) const {
    ForwardOut<Real> out;
    for (const auto& e : params_.entries) {
      out.param_vars.push_back(tape.leaf(e.value, params_require_grad));
    }
    Var<Real> clip_var = tape.leaf(std::move(clip), input_requires_grad);
    out.clip = clip_var;
    return run(tape, clip_var, std::move(out));
  }

  // Variant for callers that already own a clip var on the tape.
  ForwardOut<Real> forward_var(Tape<Real>& tape, Var<Real> clip_var,
                               bool params_require_grad = true) const {
    ForwardOut<Real> out;
    for (const auto& e : params_.entries) {
      out.param_vars.push_back(tape.leaf(e.value, params_require_grad));
    }
    out.clip = clip_var;
    return run(tape, clip_var, std::move(out));
  }

 private:
  ModelConfig cfg_;
  ParamStore<Real> params_;

  // parameter index bookkeeping
  std::vector<int> backbone_ids_;
  struct GateIds {
    int w1, b1, w2, b2;
  };
  GateIds gate_left_{}, gate_right_{}, gate_top_{}, gate_bottom_{};
  struct AffineIds {
    int w = -1, b = -1;
  };
  AffineIds sa_k_lr_, sa_v_lr_, sa_k_tb_, sa_v_tb_, sa_q_, sa_v_;
  AffineIds sp_concat_;  // concat-fusion alternative
  struct GruIds {
    int wz, uz, bz, wr, ur, br, wh, uh, bh;
  };
  std::vector<GruIds> seg_gru_;
  GruIds glob_gru_{};
  std::vector<AffineIds> ta_k_, ta_v_;
  AffineIds ta_q_, ta_vt_;
  AffineIds fuse1_, fuse2_;
  std::vector<AffineIds> head_;  // kHeadCount entries, unused slots -1

  int add_xavier(Rng& rng, const std::string& name, Shape shape, int64_t fan_in, int64_t fan_out) {
    return params_.add(name, detail::xavier<Real>(rng, std::move(shape), fan_in, fan_out));
  }

  AffineIds add_affine(Rng& rng, const std::string& name, int64_t din, int64_t dout) {
    AffineIds ids;
    ids.w = add_xavier(rng, name + ".w", {din, dout}, din, dout);
    ids.b = params_.add(name + ".b", Tensor<Real>({dout}));
    return ids;
  }

  GateIds add_gate(Rng& rng, const std::string& name, int64_t c) {
    const int64_t hidden = std::max<int64_t>(1, c / 4);
    GateIds ids{};
    ids.w1 = add_xavier(rng, name + ".w1", {c, hidden}, c, hidden);
    ids.b1 = params_.add(name + ".b1", Tensor<Real>({hidden}));
    ids.w2 = add_xavier(rng, name + ".w2", {hidden, c}, hidden, c);
    ids.b2 = params_.add(name + ".b2", Tensor<Real>({c}));
    return ids;
  }

  GruIds add_gru(Rng& rng, const std::string& name, int64_t din, int64_t dh) {
    GruIds ids{};
    ids.wz = add_xavier(rng, name + ".wz", {din, dh}, din, dh);
    ids.uz = add_xavier(rng, name + ".uz", {dh, dh}, dh, dh);
    ids.bz = params_.add(name + ".bz", Tensor<Real>({dh}));
    ids.wr = add_xavier(rng, name + ".wr", {din, dh}, din, dh);
    ids.ur = add_xavier(rng, name + ".ur", {dh, dh}, dh, dh);
    ids.br = params_.add(name + ".br", Tensor<Real>({dh}));
    ids.wh = add_xavier(rng, name + ".wh", {din, dh}, din, dh);
    ids.uh = add_xavier(rng, name + ".uh", {dh, dh}, dh, dh);
    ids.bh = params_.add(name + ".bh", Tensor<Real>({dh}));
    return ids;
  }

  void build_params(Rng& rng) {
    const int64_t c = cfg_.channels();
    const int64_t d = cfg_.d_attn();

    for (const auto& [name, shape] : backbone_param_shapes<Real>(cfg_.backbone)) {
      if (shape.size() == 4) {
        // conv kernels feed ReLU stages
        const int64_t fan_in = shape[1] * shape[2] * shape[3];
        backbone_ids_.push_back(params_.add(name, detail::he_uniform<Real>(rng, shape, fan_in)));
      } else if (shape.size() == 2) {
        backbone_ids_.push_back(add_xavier(rng, name, shape, shape[0], shape[1]));
      } else {
        backbone_ids_.push_back(params_.add(name, Tensor<Real>(shape)));
      }
    }

    if (cfg_.spatial_branch) {
      gate_left_ = add_gate(rng, "spatial.gate_left", c);
      gate_right_ = add_gate(rng, "spatial.gate_right", c);
      gate_top_ = add_gate(rng, "spatial.gate_top", c);
      gate_bottom_ = add_gate(rng, "spatial.gate_bottom", c);
      if (cfg_.spatial_fusion == SpatialFusion::attention) {
        sa_k_lr_ = add_affine(rng, "spatial.attn.k_lr", c, d);
        sa_v_lr_ = add_affine(rng, "spatial.attn.v_lr", c, d);
        sa_k_tb_ = add_affine(rng, "spatial.attn.k_tb", c, d);
        sa_v_tb_ = add_affine(rng, "spatial.attn.v_tb", c, d);
        sa_q_ = add_affine(rng, "spatial.attn.q", c, d);
        sa_v_ = add_affine(rng, "spatial.attn.v", c, d);
      } else {
        sp_concat_ = add_affine(rng, "spatial.concat", 2 * c, d);
      }
    }

    if (cfg_.temporal_branch) {
      const int64_t key_in = cfg_.use_grus ? cfg_.d_seg() : c;
      const int64_t q_in = cfg_.use_grus ? cfg_.d_glob() : c;
      for (int64_t n = 0; n < cfg_.segments.count; ++n) {
        const std::string base = "temporal.seg" + std::to_string(n);
        if (cfg_.use_grus) seg_gru_.push_back(add_gru(rng, base + ".gru", c, cfg_.d_seg()));
        ta_k_.push_back(add_affine(rng, base + ".k", key_in, d));
        ta_v_.push_back(add_affine(rng, base + ".v", key_in, d));
      }
      if (cfg_.use_grus) glob_gru_ = add_gru(rng, "temporal.glob.gru", c, cfg_.d_glob());
      ta_q_ = add_affine(rng, "temporal.glob.q", q_in, d);
      ta_vt_ = add_affine(rng, "temporal.glob.v", q_in, d);
    }

    if (cfg_.spatial_branch && cfg_.temporal_branch) {
      fuse1_ = add_affine(rng, "fuse.l1", 2 * d, 2 * d);
      fuse2_ = add_affine(rng, "fuse.l2", 2 * d, cfg_.d_fused());
    }

    head_.assign(kHeadCount, AffineIds{});
    auto add_head = [&](HeadId id, int64_t width) {
      head_[static_cast<size_t>(id)] = add_affine(rng, std::string("head.") + head_name(id), width,
                                                  cfg_.classes);
    };
    if (cfg_.spatial_branch) {
      add_head(HeadId::q_left, c);
      add_head(HeadId::q_right, c);
      add_head(HeadId::q_top, c);
      add_head(HeadId::q_bottom, c);
      add_head(HeadId::q_lr, c);
      add_head(HeadId::q_tb, c);
    }
    add_head(HeadId::q_sg, c);
    if (cfg_.spatial_branch) add_head(HeadId::q_s, d);
    if (cfg_.temporal_branch) add_head(HeadId::q_temp, d);
    if (cfg_.spatial_branch && cfg_.temporal_branch) add_head(HeadId::q_st, cfg_.d_fused());
  }

  Var<Real> pv(const ForwardOut<Real>& out, int idx) const {
    return out.param_vars[static_cast<size_t>(idx)];
  }

  GateVars<Real> gate_vars(const ForwardOut<Real>& out, const GateIds& g) const {
    return {pv(out, g.w1), pv(out, g.b1), pv(out, g.w2), pv(out, g.b2)};
  }

  GruCellVars<Real> gru_vars(const ForwardOut<Real>& out, const GruIds& g) const {
    return {pv(out, g.wz), pv(out, g.uz), pv(out, g.bz), pv(out, g.wr), pv(out, g.ur),
            pv(out, g.br), pv(out, g.wh), pv(out, g.uh), pv(out, g.bh)};
  }

  ForwardOut<Real> run(Tape<Real>& tape, Var<Real> clip_var, ForwardOut<Real> out) const {
    std::vector<Var<Real>> backbone_vars;
    for (int idx : backbone_ids_) backbone_vars.push_back(pv(out, idx));
    out.m = backbone_forward(cfg_.backbone, clip_var, backbone_vars);
    out.has_spatial = cfg_.spatial_branch;
    out.has_temporal = cfg_.temporal_branch;

    out.parts = spatial_partition(out.m);
    out.pooled = out.parts.g_sg;  // shared node; identical to temporal_pool(m)

    auto classify_into = [&](HeadId id, Var<Real> feature) {
      const AffineIds& h = head_[static_cast<size_t>(id)];
      HeadVars<Real> hv{pv(out, h.w), pv(out, h.b)};
      out.bundle[id] = classify(feature, hv);
    };

    if (cfg_.spatial_branch) {
      auto [g_lr, g_tb] = fuse_gated(out.parts, gate_vars(out, gate_left_), gate_vars(out, gate_right_),
                                     gate_vars(out, gate_top_), gate_vars(out, gate_bottom_));
      out.g_lr = g_lr;
      out.g_tb = g_tb;
      if (cfg_.spatial_fusion == SpatialFusion::attention) {
        SpatialAttentionVars<Real> sav{pv(out, sa_k_lr_.w), pv(out, sa_k_lr_.b), pv(out, sa_v_lr_.w),
                                       pv(out, sa_v_lr_.b), pv(out, sa_k_tb_.w), pv(out, sa_k_tb_.b),
                                       pv(out, sa_v_tb_.w), pv(out, sa_v_tb_.b), pv(out, sa_q_.w),
                                       pv(out, sa_q_.b),    pv(out, sa_v_.w),    pv(out, sa_v_.b)};
        out.f_s = spatial_attention(out.parts.g_sg, g_lr, g_tb, sav);
      } else {
        out.f_s = affine(concat_cols(g_lr, g_tb), pv(out, sp_concat_.w), pv(out, sp_concat_.b));
      }
      classify_into(HeadId::q_left, out.parts.h_l);
      classify_into(HeadId::q_right, out.parts.h_r);
      classify_into(HeadId::q_top, out.parts.h_t);
      classify_into(HeadId::q_bottom, out.parts.h_b);
      classify_into(HeadId::q_lr, g_lr);
      classify_into(HeadId::q_tb, g_tb);
    }
    classify_into(HeadId::q_sg, out.parts.g_sg);
    if (cfg_.spatial_branch) classify_into(HeadId::q_s, out.f_s);

    if (cfg_.temporal_branch) {
      const SegmentPlan plan = plan_segments(cfg_.t_frames, cfg_.segments.count, cfg_.segments.length);
      if (cfg_.use_grus) {
        std::vector<GruCellVars<Real>> cells;
        for (const auto& ids : seg_gru_) cells.push_back(gru_vars(out, ids));
        TemporalEncodings<Real> enc = run_grus(out.pooled, plan, cells, gru_vars(out, glob_gru_));
        out.g_seg = std::move(enc.g_seg);
        out.g_t = enc.g_t;
      } else {
        for (int64_t n = 0; n < plan.count; ++n) {
          const int64_t s0 = plan.starts[static_cast<size_t>(n)];
          out.g_seg.push_back(slice_rows(out.pooled, s0, s0 + plan.length));
        }
        out.g_t = out.pooled;
      }
      TemporalAttentionVars<Real> tav;
      for (size_t n = 0; n < ta_k_.size(); ++n) {
        tav.k_w.push_back(pv(out, ta_k_[n].w));
        tav.k_b.push_back(pv(out, ta_k_[n].b));
        tav.v_w.push_back(pv(out, ta_v_[n].w));
        tav.v_b.push_back(pv(out, ta_v_[n].b));
      }
      tav.q_w = pv(out, ta_q_.w);
      tav.q_b = pv(out, ta_q_.b);
      tav.vt_w = pv(out, ta_vt_.w);
      tav.vt_b = pv(out, ta_vt_.b);
      out.f_t = temporal_attention(out.g_t, out.g_seg, tav);
      classify_into(HeadId::q_temp, out.f_t);
    }

    if (cfg_.spatial_branch && cfg_.temporal_branch) {
      FuseVars<Real> fv{pv(out, fuse1_.w), pv(out, fuse1_.b), pv(out, fuse2_.w), pv(out, fuse2_.b)};
      out.f_st = fuse_branches(out.f_s, out.f_t, fv);
      classify_into(HeadId::q_st, out.f_st);
    }
    return out;
  }
};

}  // namespace stepnet
