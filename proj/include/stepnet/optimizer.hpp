#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "stepnet/model.hpp"

namespace stepnet {

// Linear warmup to lr_peak, then cosine decay to lr_floor at the final step.
struct Schedule {
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;
  double lr_peak = 1e-4;
  double lr_floor = 1e-5;
};

inline double lr_at(int64_t step, const Schedule& sched) {
  if (step < 0) throw ConfigError("lr_at: negative step");
  if (sched.warmup_steps > 0 && step <= sched.warmup_steps) {
    return sched.lr_peak * static_cast<double>(step) / static_cast<double>(sched.warmup_steps);
  }
  const int64_t last = sched.total_steps - 1;
  if (step >= last) return sched.lr_floor;
  const double denom = static_cast<double>(last - sched.warmup_steps);
  if (denom <= 0.0) return sched.lr_peak;
  const double progress = static_cast<double>(step - sched.warmup_steps) / denom;
  return sched.lr_floor +
         0.5 * (sched.lr_peak - sched.lr_floor) * (1.0 + std::cos(std::numbers::pi * progress));
}

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

// Adam moments with bias correction plus decoupled weight decay:
// p <- p - lr * mhat / (sqrt(vhat) + eps) - lr * wd * p.
template <class Real>
class AdamW {
 public:
  AdamW(const ParamStore<Real>& params, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& e : params.entries) {
      m_.push_back(Tensor<Real>(e.value.shape()));
      v_.push_back(Tensor<Real>(e.value.shape()));
    }
  }

  int64_t step_count() const { return step_; }
  AdamWConfig& config() { return cfg_; }
  std::vector<Tensor<Real>>& first_moments() { return m_; }
  std::vector<Tensor<Real>>& second_moments() { return v_; }
  void set_step_count(int64_t s) { step_ = s; }

  void step(ParamStore<Real>& params, const std::vector<Tensor<Real>>& grads, double lr) {
    if (grads.size() != params.entries.size()) {
      throw ShapeError("adamw: gradient list does not match parameter list");
    }
    for (size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i].all_finite()) {
        throw NumericError("adamw: non-finite gradient for parameter '" + params.entries[i].name +
                           "', aborting step");
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const Real b1 = static_cast<Real>(cfg_.beta1);
    const Real b2 = static_cast<Real>(cfg_.beta2);
    for (size_t i = 0; i < grads.size(); ++i) {
      Tensor<Real>& p = params.entries[i].value;
      Tensor<Real>& m = m_[i];
      Tensor<Real>& v = v_[i];
      const Tensor<Real>& g = grads[i];
      for (int64_t k = 0; k < p.numel(); ++k) {
        m[k] = b1 * m[k] + (Real(1) - b1) * g[k];
        v[k] = b2 * v[k] + (Real(1) - b2) * g[k] * g[k];
        const Real mhat = m[k] / static_cast<Real>(bc1);
        const Real vhat = v[k] / static_cast<Real>(bc2);
        // both terms read the pre-update parameter
        p[k] -= static_cast<Real>(lr) * (mhat / (std::sqrt(vhat) + static_cast<Real>(cfg_.eps))) +
                static_cast<Real>(lr * cfg_.weight_decay) * p[k];
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<Tensor<Real>> m_, v_;
  int64_t step_ = 0;
};

}  // namespace stepnet
