#include "stepnet/metrics.hpp"

#include <map>

#include "stepnet/errors.hpp"

namespace stepnet {

bool in_top_k(std::span<const double> logits, int64_t label, int k) {
  const double q = logits[static_cast<size_t>(label)];
  int rank = 0;
  for (size_t j = 0; j < logits.size(); ++j) {
    if (logits[j] > q) ++rank;
    if (static_cast<int64_t>(j) < label && logits[j] == q) ++rank;
  }
  return rank < k;
}

int64_t argmax(std::span<const double> logits) {
  int64_t best = 0;
  for (size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<size_t>(best)]) best = static_cast<int64_t>(i);
  }
  return best;
}

EvalMetrics compute_metrics(const std::vector<std::vector<double>>& logits,
                            const std::vector<int64_t>& labels) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw ConfigError("compute_metrics: empty or mismatched evaluation");
  }
  struct ClassCount {
    int64_t total = 0, top1 = 0, top5 = 0;
  };
  std::map<int64_t, ClassCount> per_class;
  int64_t top1 = 0, top5 = 0;
  for (size_t i = 0; i < logits.size(); ++i) {
    ClassCount& cc = per_class[labels[i]];
    ++cc.total;
    if (in_top_k(logits[i], labels[i], 1)) {
      ++top1;
      ++cc.top1;
    }
    if (in_top_k(logits[i], labels[i], 5)) {
      ++top5;
      ++cc.top5;
    }
  }
  EvalMetrics m;
  const double n = static_cast<double>(logits.size());
  m.top1_pi = 100.0 * static_cast<double>(top1) / n;
  m.top5_pi = 100.0 * static_cast<double>(top5) / n;
  double c1 = 0.0, c5 = 0.0;
  for (const auto& [label, cc] : per_class) {
    c1 += static_cast<double>(cc.top1) / static_cast<double>(cc.total);
    c5 += static_cast<double>(cc.top5) / static_cast<double>(cc.total);
  }
  const double nc = static_cast<double>(per_class.size());
  m.top1_pc = 100.0 * c1 / nc;
  m.top5_pc = 100.0 * c5 / nc;
  return m;
}

}  // namespace stepnet
