#pragma once

#include <utility>
#include <vector>

#include "stepnet/ops.hpp"

namespace stepnet {

// Rank-2 transpose; the attention blocks are its only users.
template <class Real>
Var<Real> transpose_mat(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  if (X.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + shape_str(X.shape()));
  const int64_t r = X.dim(0), c = X.dim(1);
  auto compute = [pa = a.id, r, c](Tape<Real>& tp, int self) {
    const Real* X_ = tp.value(pa).data();
    Real* Y = tp.mutable_value(self).data();
    for (int64_t i = 0; i < r; ++i) {
      for (int64_t j = 0; j < c; ++j) Y[j * r + i] = X_[i * c + j];
    }
  };
  auto backward = [pa = a.id, r, c](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Real* G = tp.grad(self).data();
    Real* GA = tp.grad_buffer(pa).data();
    for (int64_t i = 0; i < r; ++i) {
      for (int64_t j = 0; j < c; ++j) GA[i * c + j] += G[j * r + i];
    }
  };
  return t.emit(Tensor<Real>({c, r}), {a.id}, compute, backward);
}

// The five stripe-pooled features of the spatial branch, each T x C.
template <class Real>
struct SpatialParts {
  Var<Real> g_sg;  // full spatial mean
  Var<Real> h_l, h_r, h_t, h_b;
};

// Splits M into left/right and top/bottom stripes and pools each to T x C.
// With odd extents the first stripe takes the extra row/column.
template <class Real>
SpatialParts<Real> spatial_partition(Var<Real> m) {
  const Tensor<Real>& v = m.value();
  if (v.rank() != 4) throw ShapeError("spatial_partition: expected rank-4 map");
  const int64_t H = v.dim(2), W = v.dim(3);
  if (H < 2 || W < 2) {
    throw ShapeError("spatial_partition: spatial size " + std::to_string(H) + "x" + std::to_string(W) +
                     " too small to split");
  }
  const int64_t w_split = (W + 1) / 2;  // left stripe gets the extra column
  const int64_t h_split = (H + 1) / 2;  // top stripe gets the extra row
  SpatialParts<Real> parts;
  parts.g_sg = mean_pool(m, {2, 3});
  parts.h_l = region_mean(m, 0, H, 0, w_split);
  parts.h_r = region_mean(m, 0, H, w_split, W);
  parts.h_t = region_mean(m, 0, h_split, 0, W);
  parts.h_b = region_mean(m, h_split, H, 0, W);
  return parts;
}

// Two-layer perceptron weights of one gate (C -> C/4 -> C).
template <class Real>
struct GateVars {
  Var<Real> w1, b1, w2, b2;
};

// G(h) = h . sigmoid(MLP(h)), per time step.
template <class Real>
Var<Real> gate(Var<Real> h, const GateVars<Real>& p) {
  Var<Real> hidden = relu(affine(h, p.w1, p.b1));
  Var<Real> score = affine(hidden, p.w2, p.b2);
  return mul(h, sigmoid(score));
}

// g_lr = G_left(h_l) + G_right(h_r); g_tb = G_top(h_t) + G_bottom(h_b).
template <class Real>
std::pair<Var<Real>, Var<Real>> fuse_gated(const SpatialParts<Real>& parts,
                                           const GateVars<Real>& left, const GateVars<Real>& right,
                                           const GateVars<Real>& top, const GateVars<Real>& bottom) {
  Var<Real> g_lr = add(gate(parts.h_l, left), gate(parts.h_r, right));
  Var<Real> g_tb = add(gate(parts.h_t, top), gate(parts.h_b, bottom));
  return {g_lr, g_tb};
}

template <class Real>
struct SpatialAttentionVars {
  Var<Real> k_lr_w, k_lr_b, v_lr_w, v_lr_b;
  Var<Real> k_tb_w, k_tb_b, v_tb_w, v_tb_b;
  Var<Real> q_w, q_b, v_w, v_b;  // query/value from the global feature
};

// f_s = softmax(Q_s K_p^T) V_p + V_s with K_p = [K_lr ; K_tb] (2T x d) and
// V_p concatenated the same way. Scores are used as written, no 1/sqrt(d).
template <class Real>
Var<Real> spatial_attention(Var<Real> g_sg, Var<Real> g_lr, Var<Real> g_tb,
                            const SpatialAttentionVars<Real>& p) {
  Var<Real> k_lr = affine(g_lr, p.k_lr_w, p.k_lr_b);
  Var<Real> v_lr = affine(g_lr, p.v_lr_w, p.v_lr_b);
  Var<Real> k_tb = affine(g_tb, p.k_tb_w, p.k_tb_b);
  Var<Real> v_tb = affine(g_tb, p.v_tb_w, p.v_tb_b);
  Var<Real> q_s = affine(g_sg, p.q_w, p.q_b);
  Var<Real> v_s = affine(g_sg, p.v_w, p.v_b);
  Var<Real> k_p = concat_rows(std::vector<Var<Real>>{k_lr, k_tb});
  Var<Real> v_p = concat_rows(std::vector<Var<Real>>{v_lr, v_tb});
  Var<Real> scores = matmul(q_s, transpose_mat(k_p));
  Var<Real> attn = softmax_rows(scores);
  return add(matmul(attn, v_p), v_s);
}

}  // namespace stepnet
