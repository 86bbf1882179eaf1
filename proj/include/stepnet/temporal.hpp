#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "stepnet/gru.hpp"
#include "stepnet/spatial.hpp"

namespace stepnet {

// Overlapping temporal segmentation of T frames into N windows of length L.
struct SegmentPlan {
  int64_t count = 0;
  int64_t length = 0;
  std::vector<int64_t> starts;
};

// starts[i] = round(i * (T - L) / (N - 1)), round half up. Covers the clip:
// starts[0] == 0, last window ends at T.
inline SegmentPlan plan_segments(int64_t t_frames, int64_t count, int64_t length) {
  if (length < 1 || length > t_frames) {
    throw ConfigError("plan_segments: segment length " + std::to_string(length) +
                      " infeasible for T=" + std::to_string(t_frames));
  }
  if (count < 1) throw ConfigError("plan_segments: segment count must be >= 1");
  if (count == 1 && length != t_frames) {
    throw ConfigError("plan_segments: a single segment must cover the whole clip");
  }
  SegmentPlan plan;
  plan.count = count;
  plan.length = length;
  if (count == 1) {
    plan.starts = {0};
    return plan;
  }
  const double span = static_cast<double>(t_frames - length);
  for (int64_t i = 0; i < count; ++i) {
    const double pos = span * static_cast<double>(i) / static_cast<double>(count - 1);
    plan.starts.push_back(static_cast<int64_t>(std::floor(pos + 0.5)));
  }
  for (size_t i = 1; i < plan.starts.size(); ++i) {
    if (plan.starts[i] <= plan.starts[i - 1]) {
      throw ConfigError("plan_segments: starts not strictly increasing (T=" + std::to_string(t_frames) +
                        ", N=" + std::to_string(count) + ", L=" + std::to_string(length) + ")");
    }
  }
  return plan;
}

// Spatial mean of the feature map, T x C. Same primitive as the spatial
// branch's global feature, so the two agree bit-for-bit.
template <class Real>
Var<Real> temporal_pool(Var<Real> m) {
  return mean_pool(m, {2, 3});
}

// Hidden sequences of the segment GRUs plus the global GRU.
template <class Real>
struct TemporalEncodings {
  std::vector<Var<Real>> g_seg;  // each L x d_seg
  Var<Real> g_t;                 // T x d_glob
};

// Each segment runs through its own GRU (zero initial state, full hidden
// sequence); a separate GRU covers all T rows.
template <class Real>
TemporalEncodings<Real> run_grus(Var<Real> pooled, const SegmentPlan& plan,
                                 const std::vector<GruCellVars<Real>>& segment_cells,
                                 const GruCellVars<Real>& global_cell) {
  if (static_cast<int64_t>(segment_cells.size()) != plan.count) {
    throw ShapeError("run_grus: expected " + std::to_string(plan.count) + " segment cells, got " +
                     std::to_string(segment_cells.size()));
  }
  const int64_t t_frames = pooled.value().dim(0);
  if (plan.starts.back() + plan.length > t_frames) {
    throw ShapeError("run_grus: plan does not fit T=" + std::to_string(t_frames));
  }
  TemporalEncodings<Real> out;
  for (int64_t n = 0; n < plan.count; ++n) {
    const int64_t s0 = plan.starts[static_cast<size_t>(n)];
    Var<Real> seg = slice_rows(pooled, s0, s0 + plan.length);
    out.g_seg.push_back(gru_sequence(seg, segment_cells[static_cast<size_t>(n)]));
  }
  out.g_t = gru_sequence(pooled, global_cell);
  return out;
}

// Per-segment key/value affines plus the global query/value pair.
template <class Real>
struct TemporalAttentionVars {
  std::vector<Var<Real>> k_w, k_b, v_w, v_b;  // one entry per segment
  Var<Real> q_w, q_b, vt_w, vt_b;
};

// f_t = softmax(Q_t K'_p^T) V'_p + V_t; keys/values concatenated over
// segments in index order.
template <class Real>
Var<Real> temporal_attention(Var<Real> g_t, const std::vector<Var<Real>>& g_seg,
                             const TemporalAttentionVars<Real>& p) {
  if (g_seg.empty()) throw ShapeError("temporal_attention: no segments");
  std::vector<Var<Real>> keys, values;
  for (size_t n = 0; n < g_seg.size(); ++n) {
    keys.push_back(affine(g_seg[n], p.k_w[n], p.k_b[n]));
    values.push_back(affine(g_seg[n], p.v_w[n], p.v_b[n]));
  }
  Var<Real> k_p = concat_rows(keys);
  Var<Real> v_p = concat_rows(values);
  Var<Real> q_t = affine(g_t, p.q_w, p.q_b);
  Var<Real> v_t = affine(g_t, p.vt_w, p.vt_b);
  Var<Real> attn = softmax_rows(matmul(q_t, transpose_mat(k_p)));
  return add(matmul(attn, v_p), v_t);
}

template <class Real>
struct FuseVars {
  Var<Real> w1, b1, w2, b2;  // 2d -> 2d (ReLU) -> d_out
};

// Concatenates f_s and f_t along width and applies the two-layer MLP.
template <class Real>
Var<Real> fuse_branches(Var<Real> f_s, Var<Real> f_t, const FuseVars<Real>& p) {
  if (f_s.value().dim(0) != f_t.value().dim(0)) {
    throw ShapeError("fuse_branches: time length mismatch " + shape_str(f_s.value().shape()) + " vs " +
                     shape_str(f_t.value().shape()));
  }
  Var<Real> cat = concat_cols(f_s, f_t);
  Var<Real> hidden = relu(affine(cat, p.w1, p.b1));
  return affine(hidden, p.w2, p.b2);
}

}  // namespace stepnet
