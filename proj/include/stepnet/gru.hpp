#pragma once

#include <vector>

#include "stepnet/ops.hpp"

namespace stepnet {

// One GRU cell's parameters as tape vars. Shapes: W_*: d_in x d_h,
// U_*: d_h x d_h, b_*: {d_h}.
template <class Real>
struct GruCellVars {
  Var<Real> wz, uz, bz;
  Var<Real> wr, ur, br;
  Var<Real> wh, uh, bh;
};

// z = sigmoid(W_z x + U_z h + b_z)
// r = sigmoid(W_r x + U_r h + b_r)
// hcand = tanh(W_h x + U_h (r . h) + b_h)
// h' = (1 - z) . h + z . hcand
// x: 1 x d_in, h_prev: 1 x d_h.
template <class Real>
Var<Real> gru_cell(Var<Real> x, Var<Real> h_prev, const GruCellVars<Real>& p) {
  Var<Real> z = sigmoid(add(affine(x, p.wz, p.bz), matmul(h_prev, p.uz)));
  Var<Real> r = sigmoid(add(affine(x, p.wr, p.br), matmul(h_prev, p.ur)));
  Var<Real> hcand = tanh_op(add(affine(x, p.wh, p.bh), matmul(mul(r, h_prev), p.uh)));
  return add(mul(one_minus(z), h_prev), mul(z, hcand));
}

// Runs the cell over every row of a (L x d_in) sequence from a zero initial
// state and stacks the full hidden sequence (L x d_h).
template <class Real>
Var<Real> gru_sequence(Var<Real> seq, const GruCellVars<Real>& p) {
  Tape<Real>& tape = *seq.tape;
  const int64_t steps = seq.value().dim(0);
  const int64_t d_h = tape.value(p.uz.id).dim(0);
  Var<Real> h = tape.leaf(Tensor<Real>({1, d_h}), false);
  std::vector<Var<Real>> hidden;
  hidden.reserve(static_cast<size_t>(steps));
  for (int64_t s = 0; s < steps; ++s) {
    Var<Real> x = slice_rows(seq, s, s + 1);
    h = gru_cell(x, h, p);
    hidden.push_back(h);
  }
  return concat_rows(hidden);
}

}  // namespace stepnet
