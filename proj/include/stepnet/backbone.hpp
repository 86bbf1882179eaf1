#pragma once

#include <string>
#include <vector>

#include "stepnet/ops.hpp"

namespace stepnet {

enum class BackboneVariant { pooling_only, shift_cnn };

// pooling_only: per-frame average-pool to (out_h, out_w), then a 1x1 channel
// affine to the final width. Exactly flip-equivariant, used by the property
// tests.
// shift_cnn: temporal shift -> 3x3 conv -> ReLU -> 2x2 average pool per
// stage, then an integer-factor pool down to (out_h, out_w) if the stages
// did not land there already.
struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::shift_cnn;
  int64_t in_channels = 3;
  std::vector<int64_t> stages = {8, 16, 32};  // channel widths; back() is C_out
  double shift_fraction = 0.125;              // per direction
  int64_t out_h = 4;
  int64_t out_w = 4;

  int64_t out_channels() const { return stages.empty() ? in_channels : stages.back(); }

  void validate() const {
    if (in_channels <= 0) throw ConfigError("backbone: in_channels must be positive");
    if (stages.empty()) throw ConfigError("backbone: at least one stage width required");
    int64_t prev = 0;
    for (int64_t c : stages) {
      if (c <= 0) throw ConfigError("backbone: stage widths must be positive");
      if (c < prev) throw ConfigError("backbone: stage widths must be nondecreasing");
      prev = c;
    }
    if (shift_fraction < 0.0 || shift_fraction > 0.5) {
      throw ConfigError("backbone: shift_fraction must be in [0, 0.5]");
    }
    if (variant == BackboneVariant::shift_cnn && shift_fraction > 0.0) {
      for (int64_t c : stages) {
        if (shift_fraction * static_cast<double>(c) < 1.0) {
          throw ConfigError("backbone: shift_fraction * stage width must be >= 1 (stage " +
                            std::to_string(c) + ")");
        }
      }
    }
    if (out_h <= 0 || out_w <= 0) throw ConfigError("backbone: output spatial size must be positive");
  }
};

// Parameter tensor shapes for a backbone config, in registration order.
// pooling_only: {in x C_out 1x1 map, bias}.
// shift_cnn: per stage {Co x Ci x 3 x 3 kernel, bias}.
template <class Real>
std::vector<std::pair<std::string, Shape>> backbone_param_shapes(const BackboneConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> out;
  if (cfg.variant == BackboneVariant::pooling_only) {
    out.emplace_back("backbone.proj.w", Shape{cfg.in_channels, cfg.out_channels()});
    out.emplace_back("backbone.proj.b", Shape{cfg.out_channels()});
  } else {
    int64_t ci = cfg.in_channels;
    for (size_t s = 0; s < cfg.stages.size(); ++s) {
      const int64_t co = cfg.stages[s];
      out.emplace_back("backbone.stage" + std::to_string(s) + ".w", Shape{co, ci, 3, 3});
      out.emplace_back("backbone.stage" + std::to_string(s) + ".b", Shape{co});
      ci = co;
    }
  }
  return out;
}

// clip: T x in_channels x H x W -> M: T x C_out x out_h x out_w.
// `params` must be leaf vars matching backbone_param_shapes order.
template <class Real>
Var<Real> backbone_forward(const BackboneConfig& cfg, Var<Real> clip,
                           const std::vector<Var<Real>>& params) {
  const Tensor<Real>& x = clip.value();
  if (x.rank() != 4) throw ShapeError("backbone: expected rank-4 clip, got " + shape_str(x.shape()));
  if (x.dim(1) != cfg.in_channels) {
    throw ShapeError("backbone: clip has " + std::to_string(x.dim(1)) + " channels, config expects " +
                     std::to_string(cfg.in_channels));
  }
  if (cfg.variant == BackboneVariant::pooling_only) {
    const int64_t H = x.dim(2), W = x.dim(3);
    if (H % cfg.out_h != 0 || W % cfg.out_w != 0) {
      throw ShapeError("backbone: input " + std::to_string(H) + "x" + std::to_string(W) +
                       " not divisible down to " + std::to_string(cfg.out_h) + "x" +
                       std::to_string(cfg.out_w));
    }
    Var<Real> pooled = avg_pool2d(clip, H / cfg.out_h, W / cfg.out_w);
    return channel_affine(pooled, params[0], params[1]);
  }

  Var<Real> cur = clip;
  for (size_t s = 0; s < cfg.stages.size(); ++s) {
    if (cfg.shift_fraction > 0.0) cur = temporal_shift(cur, cfg.shift_fraction);
    cur = conv2d(cur, params[2 * s], params[2 * s + 1]);
    cur = relu(cur);
    const Tensor<Real>& v = cur.value();
    if (v.dim(2) % 2 != 0 || v.dim(3) % 2 != 0) {
      throw ShapeError("backbone: stage " + std::to_string(s) + " spatial size " +
                       std::to_string(v.dim(2)) + "x" + std::to_string(v.dim(3)) +
                       " not divisible by stride 2");
    }
    cur = avg_pool2d(cur, 2, 2);
  }
  const Tensor<Real>& v = cur.value();
  if (v.dim(2) != cfg.out_h || v.dim(3) != cfg.out_w) {
    if (v.dim(2) % cfg.out_h != 0 || v.dim(3) % cfg.out_w != 0) {
      throw ShapeError("backbone: stage output " + std::to_string(v.dim(2)) + "x" +
                       std::to_string(v.dim(3)) + " not divisible down to " + std::to_string(cfg.out_h) +
                       "x" + std::to_string(cfg.out_w));
    }
    cur = avg_pool2d(cur, v.dim(2) / cfg.out_h, v.dim(3) / cfg.out_w);
  }
  return cur;
}

}  // namespace stepnet
