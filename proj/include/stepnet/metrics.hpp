#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace stepnet {

// Percentages in [0, 100].
struct EvalMetrics {
  double top1_pi = 0.0;  // per-instance
  double top5_pi = 0.0;
  double top1_pc = 0.0;  // per-class (unweighted mean over classes present)
  double top5_pc = 0.0;
};

// Stable top-k membership: the label counts as top-k when fewer than k
// logits rank above it, earlier indices winning ties.
bool in_top_k(std::span<const double> logits, int64_t label, int k);

int64_t argmax(std::span<const double> logits);

EvalMetrics compute_metrics(const std::vector<std::vector<double>>& logits,
                            const std::vector<int64_t>& labels);

}  // namespace stepnet
