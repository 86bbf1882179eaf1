#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stepnet/errors.hpp"
#include "stepnet/ops.hpp"
#include "stepnet/rng.hpp"

namespace stepnet {

// Central finite differences against a supplied analytic gradient.
// Returns max over coordinates of |analytic - central| / max(1, |analytic|).
// Double precision only; single-precision differences drown in rounding.
inline double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                std::span<double> point, std::span<const double> analytic,
                                double eps) {
  if (point.size() != analytic.size()) {
    throw ShapeError("finite_diff_check: point/analytic length mismatch");
  }
  double worst = 0.0;
  for (size_t i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    point[i] = x0 + eps;
    const double fp = f(point);
    point[i] = x0 - eps;
    const double fm = f(point);
    point[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_check: non-finite evaluation at coordinate " + std::to_string(i));
    }
    const double fd = (fp - fm) / (2.0 * eps);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

// Harness for checking a tape-built scalar function of several tensor inputs.
// `build` receives leaf vars (in the order of `inputs`) and must return a
// scalar var on the same tape.
inline double check_tape_fn(
    const std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>& build,
    const std::vector<Tensor<double>>& inputs, double eps = 1e-5) {
  // flatten inputs into one coordinate vector
  std::vector<double> point;
  for (const auto& t : inputs) point.insert(point.end(), t.vec().begin(), t.vec().end());

  auto eval = [&](std::span<const double> coords, std::vector<double>* grad_out) -> double {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    size_t off = 0;
    for (const auto& t : inputs) {
      Tensor<double> copy = t;
      for (int64_t i = 0; i < copy.numel(); ++i) copy[i] = coords[off + static_cast<size_t>(i)];
      off += static_cast<size_t>(copy.numel());
      vars.push_back(tape.leaf(std::move(copy), grad_out != nullptr));
    }
    Var<double> y = build(tape, vars);
    if (tape.value(y.id).numel() != 1) throw ShapeError("check_tape_fn: build must return a scalar");
    const double val = tape.value(y.id)[0];
    if (grad_out) {
      tape.backward(y);
      grad_out->clear();
      for (const auto& v : vars) {
        const Tensor<double>& g = tape.grad(v.id);
        if (g.numel() == 0) {
          grad_out->insert(grad_out->end(), static_cast<size_t>(tape.value(v.id).numel()), 0.0);
        } else {
          grad_out->insert(grad_out->end(), g.vec().begin(), g.vec().end());
        }
      }
    }
    return val;
  };

  std::vector<double> analytic;
  eval(point, &analytic);
  auto f = [&](std::span<const double> coords) { return eval(coords, nullptr); };
  return finite_diff_check(f, point, analytic, eps);
}

// Scalar-reduces a tensor-valued op through a fixed pseudo-random weighting so
// coordinate-wise gradient errors cannot cancel in a plain sum.
inline Var<double> weighted_sum(Tape<double>& tape, Var<double> v, uint64_t salt = 0x5eedull) {
  Tensor<double> w(v.shape());
  Rng rng(Rng::derive(0x9d5c0ffee ^ salt, {static_cast<uint64_t>(w.numel())}));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  Var<double> wv = tape.leaf(std::move(w), false);
  return sum_all(mul(v, wv));
}

}  // namespace stepnet
