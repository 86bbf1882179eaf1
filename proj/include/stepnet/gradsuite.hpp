#pragma once

#include <string>
#include <vector>

#include "stepnet/gradcheck.hpp"
#include "stepnet/model.hpp"

namespace stepnet {

struct SuiteEntry {
  std::string name;
  double max_rel_err;
};

namespace detail {

inline Tensor<double> random_tensor(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  Rng rng(Rng::derive(seed, {0xc0de}));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Random values kept away from zero, for kinked ops.
inline Tensor<double> random_offzero(Shape shape, uint64_t seed) {
  Tensor<double> t(std::move(shape));
  Rng rng(Rng::derive(seed, {0x0ffc0de}));
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.uniform(0.15, 1.0);
    t[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

}  // namespace detail

// Model dims for the end-to-end composite check: M is 4 x 8 x 4 x 4,
// 3 classes, two overlapping segments.
inline ModelConfig gradcheck_model_config() {
  ModelConfig cfg;
  cfg.classes = 3;
  cfg.t_frames = 4;
  cfg.backbone.variant = BackboneVariant::shift_cnn;
  cfg.backbone.in_channels = 3;
  cfg.backbone.stages = {8};
  cfg.backbone.shift_fraction = 0.125;
  cfg.backbone.out_h = 4;
  cfg.backbone.out_w = 4;
  cfg.segments = {2, 2};
  return cfg;
}

// Full clip -> total_loss composite: finite differences over every model
// parameter and every input pixel.
inline double composite_gradcheck(uint64_t seed, double eps = 1e-5) {
  StepNet<double> model(gradcheck_model_config(), seed);
  const ModelConfig& cfg = model.config();
  Tensor<double> clip =
      detail::random_tensor({cfg.t_frames, cfg.backbone.in_channels, 8, 8}, seed ^ 0xc11b, 0.0, 1.0);
  const int64_t label = 1;

  auto eval = [&](std::span<const double> coords, std::vector<double>* grad_out) -> double {
    size_t off = 0;
    for (auto& e : model.params().entries) {
      for (int64_t i = 0; i < e.value.numel(); ++i) e.value[i] = coords[off++];
    }
    Tensor<double> clip_copy = clip;
    for (int64_t i = 0; i < clip_copy.numel(); ++i) clip_copy[i] = coords[off++];

    Tape<double> tape;
    const bool need_grad = grad_out != nullptr;
    ForwardOut<double> fwd = model.forward(tape, std::move(clip_copy), need_grad, need_grad);
    Var<double> loss = total_loss(fwd.bundle, label);
    const double val = tape.value(loss.id)[0];
    if (grad_out) {
      tape.backward(loss);
      grad_out->clear();
      auto append_grad = [&](Var<double> v) {
        const Tensor<double>& g = tape.grad(v.id);
        if (g.numel() == 0) {
          grad_out->insert(grad_out->end(), static_cast<size_t>(tape.value(v.id).numel()), 0.0);
        } else {
          grad_out->insert(grad_out->end(), g.vec().begin(), g.vec().end());
        }
      };
      for (Var<double> v : fwd.param_vars) append_grad(v);
      append_grad(fwd.clip);
    }
    return val;
  };

  std::vector<double> point;
  for (const auto& e : model.params().entries) {
    point.insert(point.end(), e.value.vec().begin(), e.value.vec().end());
  }
  point.insert(point.end(), clip.vec().begin(), clip.vec().end());

  std::vector<double> analytic;
  eval(point, &analytic);
  auto f = [&](std::span<const double> coords) { return eval(coords, nullptr); };
  return finite_diff_check(f, point, analytic, eps);
}

// Finite-difference checks for every differentiable primitive plus the
// composite. `points` controls how many random draws per primitive.
inline std::vector<SuiteEntry> run_gradient_suite(int points = 3, uint64_t seed = 20240801ull) {
  std::vector<SuiteEntry> results;
  auto record = [&](const std::string& name, double err) { results.push_back({name, err}); };

  auto multi = [&](const std::string& name, auto&& one_point) {
    double worst = 0.0;
    for (int p = 0; p < points; ++p) worst = std::max(worst, one_point(Rng::derive(seed, {name.size(), static_cast<uint64_t>(p)})));
    record(name, worst);
  };

  using Vars = std::vector<Var<double>>;

  multi("add", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, add(v[0], v[1])); },
        {detail::random_tensor({3, 4}, s), detail::random_tensor({3, 4}, s + 1)});
  });
  multi("sub", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, sub(v[0], v[1])); },
        {detail::random_tensor({3, 4}, s), detail::random_tensor({3, 4}, s + 1)});
  });
  multi("mul", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, mul(v[0], v[1])); },
        {detail::random_tensor({3, 4}, s), detail::random_tensor({3, 4}, s + 1)});
  });
  multi("scale", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, scale(v[0], 1.7)); },
        {detail::random_tensor({3, 4}, s)});
  });
  multi("one_minus", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, one_minus(v[0])); },
        {detail::random_tensor({3, 4}, s)});
  });
  multi("sigmoid", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, sigmoid(v[0])); },
        {detail::random_tensor({3, 4}, s, -3.0, 3.0)});
  });
  multi("tanh", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, tanh_op(v[0])); },
        {detail::random_tensor({3, 4}, s, -3.0, 3.0)});
  });
  multi("relu", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, relu(v[0])); },
        {detail::random_offzero({3, 4}, s)});
  });
  multi("matmul", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, matmul(v[0], v[1])); },
        {detail::random_tensor({3, 5}, s), detail::random_tensor({5, 4}, s + 1)});
  });
  multi("affine", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, affine(v[0], v[1], v[2])); },
        {detail::random_tensor({3, 5}, s), detail::random_tensor({5, 4}, s + 1),
         detail::random_tensor({4}, s + 2)});
  });
  multi("softmax_rows", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, softmax_rows(v[0])); },
        {detail::random_tensor({3, 5}, s, -2.0, 2.0)});
  });
  multi("cross_entropy", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return cross_entropy(v[0], 2); },
        {detail::random_tensor({1, 5}, s, -2.0, 2.0)});
  });
  multi("mean_pool", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, mean_pool(v[0], {2, 3})); },
        {detail::random_tensor({2, 3, 4, 4}, s)});
  });
  multi("mean_rows", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, mean_rows(v[0])); },
        {detail::random_tensor({5, 3}, s)});
  });
  multi("region_mean", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, region_mean(v[0], 0, 3, 1, 4)); },
        {detail::random_tensor({2, 3, 4, 4}, s)});
  });
  multi("sum_all", [&](uint64_t s) {
    return check_tape_fn([](Tape<double>& t, const Vars& v) { return sum_all(v[0]); },
                         {detail::random_tensor({3, 4}, s)});
  });
  multi("transpose", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, transpose_mat(v[0])); },
        {detail::random_tensor({3, 4}, s)});
  });
  multi("slice_rows", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, slice_rows(v[0], 1, 4)); },
        {detail::random_tensor({5, 3}, s)});
  });
  multi("concat_rows", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) {
          return weighted_sum(t, concat_rows(std::vector<Var<double>>{v[0], v[1]}));
        },
        {detail::random_tensor({2, 3}, s), detail::random_tensor({4, 3}, s + 1)});
  });
  multi("concat_cols", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, concat_cols(v[0], v[1])); },
        {detail::random_tensor({3, 2}, s), detail::random_tensor({3, 4}, s + 1)});
  });
  multi("temporal_shift", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, temporal_shift(v[0], 0.25)); },
        {detail::random_tensor({3, 4, 2, 2}, s)});
  });
  multi("conv2d", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, conv2d(v[0], v[1], v[2])); },
        {detail::random_tensor({2, 3, 4, 4}, s), detail::random_tensor({4, 3, 3, 3}, s + 1),
         detail::random_tensor({4}, s + 2)});
  });
  multi("avg_pool2d", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, avg_pool2d(v[0], 2, 2)); },
        {detail::random_tensor({2, 3, 4, 4}, s)});
  });
  multi("channel_affine", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) { return weighted_sum(t, channel_affine(v[0], v[1], v[2])); },
        {detail::random_tensor({2, 3, 4, 4}, s), detail::random_tensor({3, 5}, s + 1),
         detail::random_tensor({5}, s + 2)});
  });
  multi("gru_cell", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) {
          GruCellVars<double> p{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
          return weighted_sum(t, gru_cell(v[0], v[1], p));
        },
        {detail::random_tensor({1, 3}, s), detail::random_tensor({1, 4}, s + 1),
         detail::random_tensor({3, 4}, s + 2), detail::random_tensor({4, 4}, s + 3),
         detail::random_tensor({4}, s + 4), detail::random_tensor({3, 4}, s + 5),
         detail::random_tensor({4, 4}, s + 6), detail::random_tensor({4}, s + 7),
         detail::random_tensor({3, 4}, s + 8), detail::random_tensor({4, 4}, s + 9),
         detail::random_tensor({4}, s + 10)});
  });
  multi("gate", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) {
          GateVars<double> p{v[1], v[2], v[3], v[4]};
          return weighted_sum(t, gate(v[0], p));
        },
        {detail::random_tensor({4, 8}, s), detail::random_tensor({8, 2}, s + 1),
         detail::random_tensor({2}, s + 2), detail::random_tensor({2, 8}, s + 3),
         detail::random_tensor({8}, s + 4)});
  });
  multi("spatial_attention", [&](uint64_t s) {
    return check_tape_fn(
        [](Tape<double>& t, const Vars& v) {
          SpatialAttentionVars<double> p{v[3],  v[4],  v[5],  v[6],  v[7],  v[8],
                                         v[9],  v[10], v[11], v[12], v[13], v[14]};
          return weighted_sum(t, spatial_attention(v[0], v[1], v[2], p));
        },
        {detail::random_tensor({4, 6}, s), detail::random_tensor({4, 6}, s + 1),
         detail::random_tensor({4, 6}, s + 2), detail::random_tensor({6, 3}, s + 3),
         detail::random_tensor({3}, s + 4), detail::random_tensor({6, 3}, s + 5),
         detail::random_tensor({3}, s + 6), detail::random_tensor({6, 3}, s + 7),
         detail::random_tensor({3}, s + 8), detail::random_tensor({6, 3}, s + 9),
         detail::random_tensor({3}, s + 10), detail::random_tensor({6, 3}, s + 11),
         detail::random_tensor({3}, s + 12), detail::random_tensor({6, 3}, s + 13),
         detail::random_tensor({3}, s + 14)});
  });
  record("composite_model", composite_gradcheck(seed));
  return results;
}

inline double suite_max_error(const std::vector<SuiteEntry>& entries) {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
  return worst;
}

}  // namespace stepnet
