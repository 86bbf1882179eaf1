#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "stepnet/ops.hpp"

namespace stepnet {

// The ten classifier outputs. q_top is the spatial top-stripe head and
// q_temp the temporal-branch head; the two live under one symbol in some
// notations, so they get unambiguous names here.
enum class HeadId : int {
  q_left = 0,
  q_right,
  q_top,
  q_bottom,
  q_lr,
  q_tb,
  q_sg,
  q_s,
  q_temp,
  q_st,
  count_
};

constexpr int kHeadCount = static_cast<int>(HeadId::count_);

inline const char* head_name(HeadId id) {
  static const char* names[kHeadCount] = {"q_left", "q_right", "q_top", "q_bottom", "q_lr",
                                          "q_tb",   "q_sg",    "q_s",   "q_temp",   "q_st"};
  return names[static_cast<int>(id)];
}

// Logit vars present for the current model configuration. Slots for disabled
// branches stay empty. Iteration, loss accumulation and serialization all use
// the canonical HeadId order.
template <class Real>
struct LogitBundle {
  std::array<std::optional<Var<Real>>, kHeadCount> slots;

  std::optional<Var<Real>>& operator[](HeadId id) { return slots[static_cast<size_t>(id)]; }
  const std::optional<Var<Real>>& operator[](HeadId id) const {
    return slots[static_cast<size_t>(id)];
  }
};

template <class Real>
struct HeadVars {
  Var<Real> w, b;
};

// Mean over time, then an affine map to C logits (1 x C).
template <class Real>
Var<Real> classify(Var<Real> feature, const HeadVars<Real>& head) {
  return affine(mean_rows(feature), head.w, head.b);
}

// Accumulated cross entropy over every present head, in canonical order.
// The per-head terms are plain unweighted additions.
template <class Real>
Var<Real> total_loss(const LogitBundle<Real>& bundle, int64_t label) {
  std::optional<Var<Real>> acc;
  for (int i = 0; i < kHeadCount; ++i) {
    const auto& slot = bundle.slots[static_cast<size_t>(i)];
    if (!slot) continue;
    Var<Real> term = cross_entropy(*slot, label);
    acc = acc ? add(*acc, term) : term;
  }
  if (!acc) throw ShapeError("total_loss: bundle has no heads");
  return *acc;
}

// The head inference reads from: q_st when both branches run, else the
// strongest available aggregate.
template <class Real>
HeadId prediction_head(const LogitBundle<Real>& bundle) {
  for (HeadId id : {HeadId::q_st, HeadId::q_s, HeadId::q_temp, HeadId::q_sg}) {
    if (bundle[id]) return id;
  }
  throw ShapeError("prediction_head: bundle has no usable head");
}

// Argmax with lowest-index tie-break.
template <class Real>
int64_t argmax_index(const Tensor<Real>& logits) {
  int64_t best = 0;
  for (int64_t i = 1; i < logits.numel(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

template <class Real>
int64_t predict(const LogitBundle<Real>& bundle) {
  const Var<Real>& v = *bundle[prediction_head(bundle)];
  return argmax_index(v.value());
}

}  // namespace stepnet
