#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "stepnet/tape.hpp"

namespace stepnet {

namespace detail {

template <class Real>
bool wants_grad(Tape<Real>& t, int id) {
  return t.node(id).requires_grad;
}

template <class Real>
void check_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = *a.tape;
  detail::check_same_shape(t.value(a.id), t.value(b.id), "add");
  auto compute = [pa = a.id, pb = b.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    const Tensor<Real>& y = tp.value(pb);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] + y[i];
  };
  auto backward = [pa = a.id, pb = b.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& g = tp.grad(self);
    if (detail::wants_grad(tp, pa)) {
      Tensor<Real>& ga = tp.grad_buffer(pa);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (detail::wants_grad(tp, pb)) {
      Tensor<Real>& gb = tp.grad_buffer(pb);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
    }
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id, b.id}, compute, backward);
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = *a.tape;
  detail::check_same_shape(t.value(a.id), t.value(b.id), "sub");
  auto compute = [pa = a.id, pb = b.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    const Tensor<Real>& y = tp.value(pb);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] - y[i];
  };
  auto backward = [pa = a.id, pb = b.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& g = tp.grad(self);
    if (detail::wants_grad(tp, pa)) {
      Tensor<Real>& ga = tp.grad_buffer(pa);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    }
    if (detail::wants_grad(tp, pb)) {
      Tensor<Real>& gb = tp.grad_buffer(pb);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id, b.id}, compute, backward);
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = *a.tape;
  detail::check_same_shape(t.value(a.id), t.value(b.id), "mul");
  auto compute = [pa = a.id, pb = b.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    const Tensor<Real>& y = tp.value(pb);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] * y[i];
  };
  auto backward = [pa = a.id, pb = b.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& g = tp.grad(self);
    const Tensor<Real>& x = tp.value(pa);
    const Tensor<Real>& y = tp.value(pb);
    if (detail::wants_grad(tp, pa)) {
      Tensor<Real>& ga = tp.grad_buffer(pa);
      for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i];
    }
    if (detail::wants_grad(tp, pb)) {
      Tensor<Real>& gb = tp.grad_buffer(pb);
      for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * x[i];
    }
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id, b.id}, compute, backward);
}

template <class Real>
Var<Real> scale(Var<Real> a, Real c) {
  Tape<Real>& t = *a.tape;
  auto compute = [pa = a.id, c](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = c * x[i];
  };
  auto backward = [pa = a.id, c](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id}, compute, backward);
}

template <class Real>
Var<Real> one_minus(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  auto compute = [pa = a.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = Real(1) - x[i];
  };
  auto backward = [pa = a.id](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] -= g[i];
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id}, compute, backward);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <class Real>
Real sigmoid_scalar(Real x) {
  if (x >= Real(0)) {
    return Real(1) / (Real(1) + std::exp(-x));
  }
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
Var<Real> sigmoid(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  auto compute = [pa = a.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = sigmoid_scalar(x[i]);
  };
  auto backward = [pa = a.id](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    const Tensor<Real>& y = tp.value(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * y[i] * (Real(1) - y[i]);
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id}, compute, backward);
}

template <class Real>
Var<Real> tanh_op(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  auto compute = [pa = a.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(x[i]);
  };
  auto backward = [pa = a.id](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    const Tensor<Real>& y = tp.value(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (Real(1) - y[i] * y[i]);
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id}, compute, backward);
}

template <class Real>
Var<Real> relu(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  auto compute = [pa = a.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = x[i] > Real(0) ? x[i] : Real(0);
  };
  auto backward = [pa = a.id](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    for (int64_t i = 0; i < g.numel(); ++i) {
      if (x[i] > Real(0)) ga[i] += g[i];
    }
  };
  return t.emit(Tensor<Real>(t.value(a.id).shape()), {a.id}, compute, backward);
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& A = t.value(a.id);
  const Tensor<Real>& B = t.value(b.id);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape()) + " x " +
                     shape_str(B.shape()));
  }
  const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  auto compute = [pa = a.id, pb = b.id, m, k, n](Tape<Real>& tp, int self) {
    const Real* A_ = tp.value(pa).data();
    const Real* B_ = tp.value(pb).data();
    Real* C_ = tp.mutable_value(self).data();
    std::fill(C_, C_ + m * n, Real(0));
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t kk = 0; kk < k; ++kk) {
        const Real aik = A_[i * k + kk];
        const Real* brow = B_ + kk * n;
        Real* crow = C_ + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  };
  auto backward = [pa = a.id, pb = b.id, m, k, n](Tape<Real>& tp, int self) {
    const Real* G = tp.grad(self).data();
    const Real* A_ = tp.value(pa).data();
    const Real* B_ = tp.value(pb).data();
    if (detail::wants_grad(tp, pa)) {
      Real* GA = tp.grad_buffer(pa).data();
      // dA = G * B^T
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t kk = 0; kk < k; ++kk) {
          Real s = Real(0);
          const Real* grow = G + i * n;
          const Real* brow = B_ + kk * n;
          for (int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          GA[i * k + kk] += s;
        }
      }
    }
    if (detail::wants_grad(tp, pb)) {
      Real* GB = tp.grad_buffer(pb).data();
      // dB = A^T * G
      for (int64_t kk = 0; kk < k; ++kk) {
        for (int64_t i = 0; i < m; ++i) {
          const Real aik = A_[i * k + kk];
          const Real* grow = G + i * n;
          Real* gbrow = GB + kk * n;
          for (int64_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  };
  return t.emit(Tensor<Real>({m, n}), {a.id, b.id}, compute, backward);
}

// y = x W + b, b broadcast over rows. x: n x d_in, W: d_in x d_out, b: {d_out}.
template <class Real>
Var<Real> affine(Var<Real> x, Var<Real> w, Var<Real> b) {
  Tape<Real>& t = *x.tape;
  const Tensor<Real>& X = t.value(x.id);
  const Tensor<Real>& W = t.value(w.id);
  const Tensor<Real>& B = t.value(b.id);
  if (X.rank() != 2 || W.rank() != 2 || X.dim(1) != W.dim(0) || B.numel() != W.dim(1)) {
    throw ShapeError("affine: incompatible shapes x=" + shape_str(X.shape()) + " W=" +
                     shape_str(W.shape()) + " b=" + shape_str(B.shape()));
  }
  const int64_t n = X.dim(0), din = X.dim(1), dout = W.dim(1);
  auto compute = [px = x.id, pw = w.id, pb = b.id, n, din, dout](Tape<Real>& tp, int self) {
    const Real* X_ = tp.value(px).data();
    const Real* W_ = tp.value(pw).data();
    const Real* B_ = tp.value(pb).data();
    Real* Y = tp.mutable_value(self).data();
    for (int64_t i = 0; i < n; ++i) {
      Real* yrow = Y + i * dout;
      for (int64_t j = 0; j < dout; ++j) yrow[j] = B_[j];
      for (int64_t kk = 0; kk < din; ++kk) {
        const Real xik = X_[i * din + kk];
        const Real* wrow = W_ + kk * dout;
        for (int64_t j = 0; j < dout; ++j) yrow[j] += xik * wrow[j];
      }
    }
  };
  auto backward = [px = x.id, pw = w.id, pb = b.id, n, din, dout](Tape<Real>& tp, int self) {
    const Real* G = tp.grad(self).data();
    const Real* X_ = tp.value(px).data();
    const Real* W_ = tp.value(pw).data();
    if (detail::wants_grad(tp, px)) {
      Real* GX = tp.grad_buffer(px).data();
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t kk = 0; kk < din; ++kk) {
          Real s = Real(0);
          const Real* grow = G + i * dout;
          const Real* wrow = W_ + kk * dout;
          for (int64_t j = 0; j < dout; ++j) s += grow[j] * wrow[j];
          GX[i * din + kk] += s;
        }
      }
    }
    if (detail::wants_grad(tp, pw)) {
      Real* GW = tp.grad_buffer(pw).data();
      for (int64_t kk = 0; kk < din; ++kk) {
        for (int64_t i = 0; i < n; ++i) {
          const Real xik = X_[i * din + kk];
          const Real* grow = G + i * dout;
          Real* gwrow = GW + kk * dout;
          for (int64_t j = 0; j < dout; ++j) gwrow[j] += xik * grow[j];
        }
      }
    }
    if (detail::wants_grad(tp, pb)) {
      Real* GB = tp.grad_buffer(pb).data();
      for (int64_t i = 0; i < n; ++i) {
        const Real* grow = G + i * dout;
        for (int64_t j = 0; j < dout; ++j) GB[j] += grow[j];
      }
    }
  };
  return t.emit(Tensor<Real>({n, dout}), {x.id, w.id, b.id}, compute, backward);
}

// ---------------------------------------------------------------------------
// softmax / cross entropy
// ---------------------------------------------------------------------------

// Row softmax with max subtraction. Input must be finite.
template <class Real>
Var<Real> softmax_rows(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  if (X.rank() != 2) throw ShapeError("softmax_rows: expected rank-2, got " + shape_str(X.shape()));
  if (!X.all_finite()) throw NumericError("softmax_rows: non-finite input");
  const int64_t r = X.dim(0), c = X.dim(1);
  auto compute = [pa = a.id, r, c](Tape<Real>& tp, int self) {
    const Real* X_ = tp.value(pa).data();
    Real* Y = tp.mutable_value(self).data();
    for (int64_t i = 0; i < r; ++i) {
      const Real* xrow = X_ + i * c;
      Real* yrow = Y + i * c;
      Real mx = xrow[0];
      for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xrow[j]);
      Real s = Real(0);
      for (int64_t j = 0; j < c; ++j) {
        yrow[j] = std::exp(xrow[j] - mx);
        s += yrow[j];
      }
      for (int64_t j = 0; j < c; ++j) yrow[j] /= s;
    }
  };
  auto backward = [pa = a.id, r, c](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Real* G = tp.grad(self).data();
    const Real* Y = tp.value(self).data();
    Real* GA = tp.grad_buffer(pa).data();
    for (int64_t i = 0; i < r; ++i) {
      const Real* grow = G + i * c;
      const Real* yrow = Y + i * c;
      Real dot = Real(0);
      for (int64_t j = 0; j < c; ++j) dot += grow[j] * yrow[j];
      Real* garow = GA + i * c;
      for (int64_t j = 0; j < c; ++j) garow[j] += yrow[j] * (grow[j] - dot);
    }
  };
  return t.emit(Tensor<Real>({r, c}), {a.id}, compute, backward);
}

// -log softmax(logits)[label]; logits may be {C} or {1, C}. Output is {1}.
template <class Real>
Var<Real> cross_entropy(Var<Real> logits, int64_t label) {
  Tape<Real>& t = *logits.tape;
  const Tensor<Real>& Q = t.value(logits.id);
  if (Q.rank() > 2 || (Q.rank() == 2 && Q.dim(0) != 1)) {
    throw ShapeError("cross_entropy: expected a logit vector, got " + shape_str(Q.shape()));
  }
  const int64_t c = Q.numel();
  if (label < 0 || label >= c) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range [0, " +
                     std::to_string(c) + ")");
  }
  auto compute = [pq = logits.id, label, c](Tape<Real>& tp, int self) {
    const Real* q = tp.value(pq).data();
    Real mx = q[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, q[j]);
    Real s = Real(0);
    for (int64_t j = 0; j < c; ++j) s += std::exp(q[j] - mx);
    tp.mutable_value(self)[0] = std::log(s) + mx - q[label];
  };
  auto backward = [pq = logits.id, label, c](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pq)) return;
    const Real g = tp.grad(self)[0];
    const Real* q = tp.value(pq).data();
    Real mx = q[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, q[j]);
    Real s = Real(0);
    for (int64_t j = 0; j < c; ++j) s += std::exp(q[j] - mx);
    Real* gq = tp.grad_buffer(pq).data();
    for (int64_t j = 0; j < c; ++j) {
      const Real p = std::exp(q[j] - mx) / s;
      gq[j] += g * (p - (j == label ? Real(1) : Real(0)));
    }
  };
  return t.emit(Tensor<Real>({1}), {logits.id}, compute, backward);
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

// Arithmetic mean over the listed axes (removed from the output shape).
// Reduction uses a balanced pairwise tree over the reduced subspace in
// row-major order; see pairwise_sum for why.
template <class Real>
Var<Real> mean_pool(Var<Real> a, std::vector<int64_t> axes) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  const int64_t rank = X.rank();
  if (axes.empty()) throw ShapeError("mean_pool: empty axis list");
  std::vector<bool> reduced(static_cast<size_t>(rank), false);
  for (int64_t ax : axes) {
    if (ax < 0 || ax >= rank) throw ShapeError("mean_pool: axis " + std::to_string(ax) + " out of range");
    if (reduced[static_cast<size_t>(ax)]) throw ShapeError("mean_pool: duplicate axis " + std::to_string(ax));
    reduced[static_cast<size_t>(ax)] = true;
  }
  Shape out_shape;
  int64_t red_count = 1;
  for (int64_t i = 0; i < rank; ++i) {
    if (reduced[static_cast<size_t>(i)]) {
      red_count *= X.dim(i);
    } else {
      out_shape.push_back(X.dim(i));
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);

  // Strides for mapping each input offset to (out index, reduced index).
  const Shape in_shape = X.shape();
  auto compute = [pa = a.id, in_shape, reduced, red_count](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    const int64_t rank = static_cast<int64_t>(in_shape.size());
    const int64_t out_n = out.numel();
    std::vector<Real> buf(static_cast<size_t>(out_n * red_count));
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    for (int64_t off = 0; off < x.numel(); ++off) {
      int64_t oi = 0, ri = 0;
      for (int64_t d = 0; d < rank; ++d) {
        if (reduced[static_cast<size_t>(d)]) {
          ri = ri * in_shape[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
        } else {
          oi = oi * in_shape[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
        }
      }
      buf[static_cast<size_t>(oi * red_count + ri)] = x[off];
      for (int64_t d = rank - 1; d >= 0; --d) {
        if (++idx[static_cast<size_t>(d)] < in_shape[static_cast<size_t>(d)]) break;
        idx[static_cast<size_t>(d)] = 0;
      }
    }
    const Real inv = Real(1) / static_cast<Real>(red_count);
    for (int64_t o = 0; o < out_n; ++o) {
      out[o] = pairwise_sum(buf.data() + o * red_count, red_count) * inv;
    }
  };
  auto backward = [pa = a.id, in_shape, reduced, red_count](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    const int64_t rank = static_cast<int64_t>(in_shape.size());
    const Real inv = Real(1) / static_cast<Real>(red_count);
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    for (int64_t off = 0; off < ga.numel(); ++off) {
      int64_t oi = 0;
      for (int64_t d = 0; d < rank; ++d) {
        if (!reduced[static_cast<size_t>(d)]) {
          oi = oi * in_shape[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
        }
      }
      ga[off] += g[oi] * inv;
      for (int64_t d = rank - 1; d >= 0; --d) {
        if (++idx[static_cast<size_t>(d)] < in_shape[static_cast<size_t>(d)]) break;
        idx[static_cast<size_t>(d)] = 0;
      }
    }
  };
  return t.emit(Tensor<Real>(out_shape), {a.id}, compute, backward);
}

// Mean over rows of a rank-2 tensor, kept as a 1 x d row.
template <class Real>
Var<Real> mean_rows(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  if (X.rank() != 2) throw ShapeError("mean_rows: expected rank-2, got " + shape_str(X.shape()));
  const int64_t r = X.dim(0), c = X.dim(1);
  auto compute = [pa = a.id, r, c](Tape<Real>& tp, int self) {
    const Real* X_ = tp.value(pa).data();
    Real* Y = tp.mutable_value(self).data();
    const Real inv = Real(1) / static_cast<Real>(r);
    for (int64_t j = 0; j < c; ++j) Y[j] = pairwise_sum_strided(X_ + j, r, c) * inv;
  };
  auto backward = [pa = a.id, r, c](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Real* G = tp.grad(self).data();
    Real* GA = tp.grad_buffer(pa).data();
    const Real inv = Real(1) / static_cast<Real>(r);
    for (int64_t i = 0; i < r; ++i) {
      for (int64_t j = 0; j < c; ++j) GA[i * c + j] += G[j] * inv;
    }
  };
  return t.emit(Tensor<Real>({1, c}), {a.id}, compute, backward);
}

// Mean of a spatial sub-rectangle of a T x C x H x W map, per (t, c).
// Rows first, columns inside, both pairwise-treed.
template <class Real>
Var<Real> region_mean(Var<Real> a, int64_t y0, int64_t y1, int64_t x0, int64_t x1) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  if (X.rank() != 4) throw ShapeError("region_mean: expected rank-4, got " + shape_str(X.shape()));
  const int64_t T = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  if (!(0 <= y0 && y0 < y1 && y1 <= H && 0 <= x0 && x0 < x1 && x1 <= W)) {
    throw ShapeError("region_mean: region out of bounds");
  }
  const int64_t rh = y1 - y0, rw = x1 - x0;
  auto compute = [pa = a.id, T, C, H, W, y0, x0, rh, rw](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    const Real inv = Real(1) / static_cast<Real>(rh * rw);
    std::vector<Real> rows(static_cast<size_t>(rh));
    for (int64_t tt = 0; tt < T; ++tt) {
      for (int64_t cc = 0; cc < C; ++cc) {
        const Real* base = x.data() + ((tt * C + cc) * H + y0) * W + x0;
        for (int64_t yy = 0; yy < rh; ++yy) {
          rows[static_cast<size_t>(yy)] = pairwise_sum(base + yy * W, rw);
        }
        out.at2(tt, cc) = pairwise_sum(rows.data(), rh) * inv;
      }
    }
  };
  auto backward = [pa = a.id, T, C, H, W, y0, x0, rh, rw](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    const Real inv = Real(1) / static_cast<Real>(rh * rw);
    for (int64_t tt = 0; tt < T; ++tt) {
      for (int64_t cc = 0; cc < C; ++cc) {
        const Real gv = g.at2(tt, cc) * inv;
        Real* base = ga.data() + ((tt * C + cc) * H + y0) * W + x0;
        for (int64_t yy = 0; yy < rh; ++yy) {
          for (int64_t xx = 0; xx < rw; ++xx) base[yy * W + xx] += gv;
        }
      }
    }
  };
  return t.emit(Tensor<Real>({T, C}), {a.id}, compute, backward);
}

template <class Real>
Var<Real> sum_all(Var<Real> a) {
  Tape<Real>& t = *a.tape;
  auto compute = [pa = a.id](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    tp.mutable_value(self)[0] = pairwise_sum(x.data(), x.numel());
  };
  auto backward = [pa = a.id](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Real g = tp.grad(self)[0];
    Tensor<Real>& ga = tp.grad_buffer(pa);
    for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  };
  return t.emit(Tensor<Real>({1}), {a.id}, compute, backward);
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <class Real>
Var<Real> slice_rows(Var<Real> a, int64_t r0, int64_t r1) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  if (X.rank() != 2) throw ShapeError("slice_rows: expected rank-2, got " + shape_str(X.shape()));
  if (!(0 <= r0 && r0 < r1 && r1 <= X.dim(0))) throw ShapeError("slice_rows: range out of bounds");
  const int64_t c = X.dim(1), n = r1 - r0;
  auto compute = [pa = a.id, r0, n, c](Tape<Real>& tp, int self) {
    const Real* X_ = tp.value(pa).data();
    Real* Y = tp.mutable_value(self).data();
    std::copy(X_ + r0 * c, X_ + (r0 + n) * c, Y);
  };
  auto backward = [pa = a.id, r0, n, c](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Real* G = tp.grad(self).data();
    Real* GA = tp.grad_buffer(pa).data();
    for (int64_t i = 0; i < n * c; ++i) GA[r0 * c + i] += G[i];
  };
  return t.emit(Tensor<Real>({n, c}), {a.id}, compute, backward);
}

template <class Real>
Var<Real> concat_rows(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape<Real>& t = *parts[0].tape;
  const int64_t c = t.value(parts[0].id).dim(1);
  int64_t rows = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    const Tensor<Real>& X = t.value(p.id);
    if (X.rank() != 2 || X.dim(1) != c) {
      throw ShapeError("concat_rows: width mismatch at part " + std::to_string(ids.size()));
    }
    rows += X.dim(0);
    ids.push_back(p.id);
  }
  auto compute = [ids, c](Tape<Real>& tp, int self) {
    Real* Y = tp.mutable_value(self).data();
    int64_t r = 0;
    for (int pid : ids) {
      const Tensor<Real>& X = tp.value(pid);
      std::copy(X.data(), X.data() + X.numel(), Y + r * c);
      r += X.dim(0);
    }
  };
  auto backward = [ids, c](Tape<Real>& tp, int self) {
    const Real* G = tp.grad(self).data();
    int64_t r = 0;
    for (int pid : ids) {
      const int64_t nr = tp.value(pid).dim(0);
      if (detail::wants_grad(tp, pid)) {
        Real* GP = tp.grad_buffer(pid).data();
        for (int64_t i = 0; i < nr * c; ++i) GP[i] += G[r * c + i];
      }
      r += nr;
    }
  };
  return t.emit(Tensor<Real>({rows, c}), ids, compute, backward);
}

template <class Real>
Var<Real> concat_cols(Var<Real> a, Var<Real> b) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& A = t.value(a.id);
  const Tensor<Real>& B = t.value(b.id);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(0) != B.dim(0)) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  }
  const int64_t r = A.dim(0), ca = A.dim(1), cb = B.dim(1);
  auto compute = [pa = a.id, pb = b.id, r, ca, cb](Tape<Real>& tp, int self) {
    const Real* A_ = tp.value(pa).data();
    const Real* B_ = tp.value(pb).data();
    Real* Y = tp.mutable_value(self).data();
    for (int64_t i = 0; i < r; ++i) {
      std::copy(A_ + i * ca, A_ + (i + 1) * ca, Y + i * (ca + cb));
      std::copy(B_ + i * cb, B_ + (i + 1) * cb, Y + i * (ca + cb) + ca);
    }
  };
  auto backward = [pa = a.id, pb = b.id, r, ca, cb](Tape<Real>& tp, int self) {
    const Real* G = tp.grad(self).data();
    if (detail::wants_grad(tp, pa)) {
      Real* GA = tp.grad_buffer(pa).data();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < ca; ++j) GA[i * ca + j] += G[i * (ca + cb) + j];
      }
    }
    if (detail::wants_grad(tp, pb)) {
      Real* GB = tp.grad_buffer(pb).data();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < cb; ++j) GB[i * cb + j] += G[i * (ca + cb) + ca + j];
      }
    }
  };
  return t.emit(Tensor<Real>({r, ca + cb}), {a.id, b.id}, compute, backward);
}

// ---------------------------------------------------------------------------
// video ops
// ---------------------------------------------------------------------------

// Shifts the first floor(C*fraction) channels one step toward earlier time
// and the next group one step toward later time, zero-filling at clip
// boundaries. fraction is per direction.
template <class Real>
Var<Real> temporal_shift(Var<Real> a, double fraction) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  if (X.rank() != 4) throw ShapeError("temporal_shift: expected rank-4, got " + shape_str(X.shape()));
  if (fraction < 0.0 || fraction > 0.5) throw ShapeError("temporal_shift: fraction must be in [0, 0.5]");
  const int64_t T = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  const int64_t n = static_cast<int64_t>(static_cast<double>(C) * fraction);
  const int64_t plane = H * W;
  auto compute = [pa = a.id, T, C, plane, n](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    for (int64_t tt = 0; tt < T; ++tt) {
      for (int64_t cc = 0; cc < C; ++cc) {
        Real* dst = out.data() + (tt * C + cc) * plane;
        int64_t src_t = tt;
        if (cc < n) {
          src_t = tt + 1;  // toward earlier time: frame t takes content of t+1
        } else if (cc < 2 * n) {
          src_t = tt - 1;
        }
        if (src_t < 0 || src_t >= T) {
          std::fill(dst, dst + plane, Real(0));
        } else {
          const Real* src = x.data() + (src_t * C + cc) * plane;
          std::copy(src, src + plane, dst);
        }
      }
    }
  };
  auto backward = [pa = a.id, T, C, plane, n](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    for (int64_t tt = 0; tt < T; ++tt) {
      for (int64_t cc = 0; cc < C; ++cc) {
        int64_t src_t = tt;
        if (cc < n) {
          src_t = tt + 1;
        } else if (cc < 2 * n) {
          src_t = tt - 1;
        }
        if (src_t < 0 || src_t >= T) continue;
        const Real* grow = g.data() + (tt * C + cc) * plane;
        Real* garow = ga.data() + (src_t * C + cc) * plane;
        for (int64_t i = 0; i < plane; ++i) garow[i] += grow[i];
      }
    }
  };
  return t.emit(Tensor<Real>({T, C, H, W}), {a.id}, compute, backward);
}

// Per-frame 2D convolution over T x C x H x W, odd kernel, same padding.
template <class Real>
Var<Real> conv2d(Var<Real> x, Var<Real> w, Var<Real> b) {
  Tape<Real>& t = *x.tape;
  const Tensor<Real>& X = t.value(x.id);
  const Tensor<Real>& W_ = t.value(w.id);
  const Tensor<Real>& B = t.value(b.id);
  if (X.rank() != 4 || W_.rank() != 4) {
    throw ShapeError("conv2d: expected rank-4 input/weight");
  }
  const int64_t T = X.dim(0), Ci = X.dim(1), H = X.dim(2), Wd = X.dim(3);
  const int64_t Co = W_.dim(0), k = W_.dim(2);
  if (W_.dim(1) != Ci || W_.dim(3) != k || k % 2 == 0 || B.numel() != Co) {
    throw ShapeError("conv2d: incompatible shapes x=" + shape_str(X.shape()) + " w=" +
                     shape_str(W_.shape()) + " b=" + shape_str(B.shape()));
  }
  const int64_t pad = k / 2;
  auto compute = [px = x.id, pw = w.id, pb = b.id, T, Ci, H, Wd, Co, k, pad](Tape<Real>& tp, int self) {
    const Real* X_ = tp.value(px).data();
    const Real* Wt = tp.value(pw).data();
    const Real* B_ = tp.value(pb).data();
    Real* Y = tp.mutable_value(self).data();
    const int64_t in_plane = H * Wd, out_plane = H * Wd;
    for (int64_t tt = 0; tt < T; ++tt) {
      const Real* xin = X_ + tt * Ci * in_plane;
      Real* yout = Y + tt * Co * out_plane;
      for (int64_t co = 0; co < Co; ++co) {
        Real* ymap = yout + co * out_plane;
        std::fill(ymap, ymap + out_plane, B_[co]);
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const Real* xmap = xin + ci * in_plane;
          const Real* wmat = Wt + (co * Ci + ci) * k * k;
          for (int64_t ky = 0; ky < k; ++ky) {
            const int64_t y_lo = std::max<int64_t>(0, pad - ky);
            const int64_t y_hi = std::min<int64_t>(H, H + pad - ky);
            for (int64_t kx = 0; kx < k; ++kx) {
              const Real wv = wmat[ky * k + kx];
              const int64_t x_lo = std::max<int64_t>(0, pad - kx);
              const int64_t x_hi = std::min<int64_t>(Wd, Wd + pad - kx);
              for (int64_t y = y_lo; y < y_hi; ++y) {
                const Real* xr = xmap + (y + ky - pad) * Wd + (kx - pad);
                Real* yr = ymap + y * Wd;
                for (int64_t xx = x_lo; xx < x_hi; ++xx) yr[xx] += wv * xr[xx];
              }
            }
          }
        }
      }
    }
  };
  auto backward = [px = x.id, pw = w.id, pb = b.id, T, Ci, H, Wd, Co, k, pad](Tape<Real>& tp, int self) {
    const Real* G = tp.grad(self).data();
    const Real* X_ = tp.value(px).data();
    const Real* Wt = tp.value(pw).data();
    const int64_t plane = H * Wd;
    if (detail::wants_grad(tp, px)) {
      Real* GX = tp.grad_buffer(px).data();
      for (int64_t tt = 0; tt < T; ++tt) {
        const Real* gout = G + tt * Co * plane;
        Real* gxin = GX + tt * Ci * plane;
        for (int64_t co = 0; co < Co; ++co) {
          const Real* gmap = gout + co * plane;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            Real* gxmap = gxin + ci * plane;
            const Real* wmat = Wt + (co * Ci + ci) * k * k;
            for (int64_t ky = 0; ky < k; ++ky) {
              const int64_t y_lo = std::max<int64_t>(0, pad - ky);
              const int64_t y_hi = std::min<int64_t>(H, H + pad - ky);
              for (int64_t kx = 0; kx < k; ++kx) {
                const Real wv = wmat[ky * k + kx];
                const int64_t x_lo = std::max<int64_t>(0, pad - kx);
                const int64_t x_hi = std::min<int64_t>(Wd, Wd + pad - kx);
                for (int64_t y = y_lo; y < y_hi; ++y) {
                  Real* gxr = gxmap + (y + ky - pad) * Wd + (kx - pad);
                  const Real* gr = gmap + y * Wd;
                  for (int64_t xx = x_lo; xx < x_hi; ++xx) gxr[xx] += wv * gr[xx];
                }
              }
            }
          }
        }
      }
    }
    if (detail::wants_grad(tp, pw)) {
      Real* GW = tp.grad_buffer(pw).data();
      for (int64_t tt = 0; tt < T; ++tt) {
        const Real* gout = G + tt * Co * plane;
        const Real* xin = X_ + tt * Ci * plane;
        for (int64_t co = 0; co < Co; ++co) {
          const Real* gmap = gout + co * plane;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const Real* xmap = xin + ci * plane;
            Real* gwmat = GW + (co * Ci + ci) * k * k;
            for (int64_t ky = 0; ky < k; ++ky) {
              const int64_t y_lo = std::max<int64_t>(0, pad - ky);
              const int64_t y_hi = std::min<int64_t>(H, H + pad - ky);
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t x_lo = std::max<int64_t>(0, pad - kx);
                const int64_t x_hi = std::min<int64_t>(Wd, Wd + pad - kx);
                Real s = Real(0);
                for (int64_t y = y_lo; y < y_hi; ++y) {
                  const Real* xr = xmap + (y + ky - pad) * Wd + (kx - pad);
                  const Real* gr = gmap + y * Wd;
                  for (int64_t xx = x_lo; xx < x_hi; ++xx) s += gr[xx] * xr[xx];
                }
                gwmat[ky * k + kx] += s;
              }
            }
          }
        }
      }
    }
    if (detail::wants_grad(tp, pb)) {
      Real* GB = tp.grad_buffer(pb).data();
      for (int64_t tt = 0; tt < T; ++tt) {
        for (int64_t co = 0; co < Co; ++co) {
          const Real* gmap = G + (tt * Co + co) * plane;
          Real s = Real(0);
          for (int64_t i = 0; i < plane; ++i) s += gmap[i];
          GB[co] += s;
        }
      }
    }
  };
  return t.emit(Tensor<Real>({T, Co, H, Wd}), {x.id, w.id, b.id}, compute, backward);
}

// Non-overlapping average pooling by integer factors.
template <class Real>
Var<Real> avg_pool2d(Var<Real> a, int64_t fh, int64_t fw) {
  Tape<Real>& t = *a.tape;
  const Tensor<Real>& X = t.value(a.id);
  if (X.rank() != 4) throw ShapeError("avg_pool2d: expected rank-4, got " + shape_str(X.shape()));
  const int64_t T = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
  if (fh <= 0 || fw <= 0 || H % fh != 0 || W % fw != 0) {
    throw ShapeError("avg_pool2d: spatial size " + std::to_string(H) + "x" + std::to_string(W) +
                     " not divisible by pool factors " + std::to_string(fh) + "x" + std::to_string(fw));
  }
  const int64_t Ho = H / fh, Wo = W / fw;
  auto compute = [pa = a.id, T, C, H, W, fh, fw, Ho, Wo](Tape<Real>& tp, int self) {
    const Tensor<Real>& x = tp.value(pa);
    Tensor<Real>& out = tp.mutable_value(self);
    const Real inv = Real(1) / static_cast<Real>(fh * fw);
    std::vector<Real> rows(static_cast<size_t>(fh));
    for (int64_t tc = 0; tc < T * C; ++tc) {
      const Real* xmap = x.data() + tc * H * W;
      Real* ymap = out.data() + tc * Ho * Wo;
      for (int64_t oy = 0; oy < Ho; ++oy) {
        for (int64_t ox = 0; ox < Wo; ++ox) {
          for (int64_t yy = 0; yy < fh; ++yy) {
            rows[static_cast<size_t>(yy)] = pairwise_sum(xmap + (oy * fh + yy) * W + ox * fw, fw);
          }
          ymap[oy * Wo + ox] = pairwise_sum(rows.data(), fh) * inv;
        }
      }
    }
  };
  auto backward = [pa = a.id, T, C, H, W, fh, fw, Ho, Wo](Tape<Real>& tp, int self) {
    if (!detail::wants_grad(tp, pa)) return;
    const Tensor<Real>& g = tp.grad(self);
    Tensor<Real>& ga = tp.grad_buffer(pa);
    const Real inv = Real(1) / static_cast<Real>(fh * fw);
    for (int64_t tc = 0; tc < T * C; ++tc) {
      const Real* gmap = g.data() + tc * Ho * Wo;
      Real* gamap = ga.data() + tc * H * W;
      for (int64_t oy = 0; oy < Ho; ++oy) {
        for (int64_t ox = 0; ox < Wo; ++ox) {
          const Real gv = gmap[oy * Wo + ox] * inv;
          for (int64_t yy = 0; yy < fh; ++yy) {
            for (int64_t xx = 0; xx < fw; ++xx) gamap[(oy * fh + yy) * W + ox * fw + xx] += gv;
          }
        }
      }
    }
  };
  return t.emit(Tensor<Real>({T, C, Ho, Wo}), {a.id}, compute, backward);
}

// 1x1 channel map over T x C x H x W: out[t,co,y,x] = sum_ci W[ci,co] in[t,ci,y,x] + b[co].
template <class Real>
Var<Real> channel_affine(Var<Real> x, Var<Real> w, Var<Real> b) {
  Tape<Real>& t = *x.tape;
  const Tensor<Real>& X = t.value(x.id);
  const Tensor<Real>& W_ = t.value(w.id);
  const Tensor<Real>& B = t.value(b.id);
  if (X.rank() != 4 || W_.rank() != 2 || W_.dim(0) != X.dim(1) || B.numel() != W_.dim(1)) {
    throw ShapeError("channel_affine: incompatible shapes x=" + shape_str(X.shape()) + " w=" +
                     shape_str(W_.shape()));
  }
  const int64_t T = X.dim(0), Ci = X.dim(1), H = X.dim(2), W = X.dim(3), Co = W_.dim(1);
  const int64_t plane = H * W;
  auto compute = [px = x.id, pw = w.id, pb = b.id, T, Ci, Co, plane](Tape<Real>& tp, int self) {
    const Real* X_ = tp.value(px).data();
    const Real* Wt = tp.value(pw).data();
    const Real* B_ = tp.value(pb).data();
    Real* Y = tp.mutable_value(self).data();
    for (int64_t tt = 0; tt < T; ++tt) {
      for (int64_t co = 0; co < Co; ++co) {
        Real* ymap = Y + (tt * Co + co) * plane;
        std::fill(ymap, ymap + plane, B_[co]);
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const Real wv = Wt[ci * Co + co];
          const Real* xmap = X_ + (tt * Ci + ci) * plane;
          for (int64_t i = 0; i < plane; ++i) ymap[i] += wv * xmap[i];
        }
      }
    }
  };
  auto backward = [px = x.id, pw = w.id, pb = b.id, T, Ci, Co, plane](Tape<Real>& tp, int self) {
    const Real* G = tp.grad(self).data();
    const Real* X_ = tp.value(px).data();
    const Real* Wt = tp.value(pw).data();
    if (detail::wants_grad(tp, px)) {
      Real* GX = tp.grad_buffer(px).data();
      for (int64_t tt = 0; tt < T; ++tt) {
        for (int64_t co = 0; co < Co; ++co) {
          const Real* gmap = G + (tt * Co + co) * plane;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const Real wv = Wt[ci * Co + co];
            Real* gxmap = GX + (tt * Ci + ci) * plane;
            for (int64_t i = 0; i < plane; ++i) gxmap[i] += wv * gmap[i];
          }
        }
      }
    }
    if (detail::wants_grad(tp, pw)) {
      Real* GW = tp.grad_buffer(pw).data();
      for (int64_t tt = 0; tt < T; ++tt) {
        for (int64_t co = 0; co < Co; ++co) {
          const Real* gmap = G + (tt * Co + co) * plane;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const Real* xmap = X_ + (tt * Ci + ci) * plane;
            Real s = Real(0);
            for (int64_t i = 0; i < plane; ++i) s += gmap[i] * xmap[i];
            GW[ci * Co + co] += s;
          }
        }
      }
    }
    if (detail::wants_grad(tp, pb)) {
      Real* GB = tp.grad_buffer(pb).data();
      for (int64_t tt = 0; tt < T; ++tt) {
        for (int64_t co = 0; co < Co; ++co) {
          const Real* gmap = G + (tt * Co + co) * plane;
          Real s = Real(0);
          for (int64_t i = 0; i < plane; ++i) s += gmap[i];
          GB[co] += s;
        }
      }
    }
  };
  return t.emit(Tensor<Real>({T, Co, H, W}), {x.id, w.id, b.id}, compute, backward);
}

}  // namespace stepnet
