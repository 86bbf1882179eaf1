#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "stepnet/checkpoint.hpp"
#include "stepnet/config.hpp"
#include "stepnet/fusion.hpp"
#include "stepnet/metrics.hpp"

namespace stepnet {

// Runs fn(i) for i in [0, n) across a small pool. Each call writes only its
// own output slot and the caller reduces in index order, so the result never
// depends on the thread count or scheduling.
template <class Fn>
void parallel_for_indexed(size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int count = static_cast<int>(std::min<size_t>(static_cast<size_t>(threads), n));
  pool.reserve(static_cast<size_t>(count));
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

inline int resolve_threads(int configured) {
  if (configured > 0) return configured;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp<unsigned>(hw == 0 ? 1 : hw, 1, 8));
}

template <class Real>
Tensor<Real> to_real(const Tensor<float>& t) {
  Tensor<Real> out(t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<Real>(t[i]);
  return out;
}

// Prediction-head logits for every clip of a split, in dataset order.
template <class Real>
LogitExport export_logits(const StepNet<Real>& model, const ClipDataset& ds, uint64_t run_seed,
                          int threads) {
  LogitExport records(ds.size());
  parallel_for_indexed(ds.size(), threads, [&](size_t i) {
    Tape<Real> tape;
    Tensor<Real> input = to_real<Real>(ds.model_input(i, SampleMode::test, run_seed, 0));
    ForwardOut<Real> fwd = model.forward(tape, std::move(input), false, false);
    const Var<Real>& head = *fwd.bundle[prediction_head(fwd.bundle)];
    LogitRecord r;
    r.clip_id = ds.item(i).clip_id;
    r.label = ds.item(i).label;
    const Tensor<Real>& q = head.value();
    r.logits.assign(q.numel(), 0.0);
    for (int64_t k = 0; k < q.numel(); ++k) r.logits[static_cast<size_t>(k)] = static_cast<double>(q[k]);
    records[i] = std::move(r);
  });
  return records;
}

template <class Real>
EvalMetrics evaluate_model(const StepNet<Real>& model, const ClipDataset& ds, uint64_t run_seed,
                           int threads) {
  LogitExport records = export_logits(model, ds, run_seed, threads);
  std::vector<std::vector<double>> logits;
  std::vector<int64_t> labels;
  logits.reserve(records.size());
  for (auto& r : records) {
    logits.push_back(std::move(r.logits));
    labels.push_back(r.label);
  }
  return compute_metrics(logits, labels);
}

struct TrainResult {
  EvalMetrics final_metrics;
  double best_top1 = 0.0;
  int64_t epochs_run = 0;
  std::filesystem::path log_path, best_path, last_path;
};

// One epoch-order shuffle, derived from (seed, epoch) only.
inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(Rng::derive(seed, {0x04de4, static_cast<uint64_t>(epoch)}));
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

// Epoch loop: forward -> accumulated loss -> backward -> AdamW with the
// warmup/cosine schedule; per-epoch evaluation, JSON-lines metrics log,
// best/last checkpoints. Resume restores parameters, moments and schedule
// position; the data order of epoch k depends only on (seed, k), so the
// continued run replays exactly what the uninterrupted run would have done.
template <class Real>
TrainResult train_model(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                        const std::filesystem::path& resume_from = {},
                        int64_t stop_after_epoch = -1) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  ClipDataset train_ds = ClipDataset::load(cfg.data, "train", cfg.model.t_frames);
  ClipDataset test_ds = ClipDataset::load(cfg.data, "test", cfg.model.t_frames);
  if (train_ds.num_classes() != cfg.model.classes) {
    throw ConfigError("train: dataset has " + std::to_string(train_ds.num_classes()) +
                      " classes, config expects " + std::to_string(cfg.model.classes));
  }

  StepNet<Real> model(cfg.model, cfg.seed);
  AdamW<Real> opt(model.params(),
                  {cfg.schedule.beta1, cfg.schedule.beta2, cfg.schedule.eps, cfg.schedule.weight_decay});

  const int64_t batch = cfg.schedule.batch_size;
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train_ds.size()) + batch - 1) / batch;
  Schedule sched{cfg.schedule.warmup_epochs * steps_per_epoch, cfg.schedule.epochs * steps_per_epoch,
                 cfg.schedule.lr_peak, cfg.schedule.lr_floor};
  const int threads = resolve_threads(cfg.schedule.threads);
  const uint64_t hash = config_hash(cfg);

  CheckpointMeta meta;
  meta.config_hash = hash;
  meta.precision = sizeof(Real) == sizeof(double) ? 1 : 0;
  meta.seed = cfg.seed;

  TrainResult result;
  result.log_path = out_dir / "metrics.jsonl";
  result.best_path = out_dir / "best.ckpt";
  result.last_path = out_dir / "last.ckpt";

  int64_t start_epoch = 0;
  if (!resume_from.empty()) {
    const CheckpointMeta loaded = load_checkpoint<Real>(resume_from, model.params(), opt);
    if (loaded.config_hash != hash) {
      throw ConfigError("train: checkpoint config hash does not match this config");
    }
    start_epoch = loaded.next_epoch;
    meta.best_top1 = loaded.best_top1;
    meta.global_step = loaded.global_step;
  }

  std::ofstream log(result.log_path, start_epoch == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("train: cannot write " + result.log_path.string());

  const size_t param_count = model.params().entries.size();
  for (int64_t epoch = start_epoch; epoch < cfg.schedule.epochs; ++epoch) {
    const std::vector<size_t> order = epoch_order(train_ds.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    int64_t seen = 0;
    double last_lr = 0.0;

    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      const size_t lo = static_cast<size_t>(b * batch);
      const size_t hi = std::min(order.size(), static_cast<size_t>((b + 1) * batch));
      if (lo >= hi) break;
      const size_t n = hi - lo;

      std::vector<double> losses(n, 0.0);
      std::vector<std::vector<Tensor<Real>>> grads(n);
      parallel_for_indexed(n, threads, [&](size_t k) {
        const size_t idx = order[lo + k];
        Tape<Real> tape;
        Tensor<Real> input =
            to_real<Real>(train_ds.model_input(idx, SampleMode::train, cfg.seed, epoch));
        ForwardOut<Real> fwd = model.forward(tape, std::move(input), true, false);
        Var<Real> loss = total_loss(fwd.bundle, train_ds.item(idx).label);
        losses[k] = static_cast<double>(tape.value(loss.id)[0]);
        tape.backward(loss);
        grads[k].reserve(param_count);
        for (size_t p = 0; p < param_count; ++p) {
          const Tensor<Real>& g = tape.grad(fwd.param_vars[p].id);
          if (g.numel() == 0) {
            grads[k].push_back(Tensor<Real>(model.params().entries[p].value.shape()));
          } else {
            grads[k].push_back(g);
          }
        }
      });

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      batch_loss /= static_cast<double>(n);
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           "; last-good checkpoint retained at " + result.last_path.string());
      }
      epoch_loss += batch_loss * static_cast<double>(n);
      seen += static_cast<int64_t>(n);

      // ordered reduction over the batch, then mean
      std::vector<Tensor<Real>> mean_grads;
      mean_grads.reserve(param_count);
      const Real inv = Real(1) / static_cast<Real>(n);
      for (size_t p = 0; p < param_count; ++p) {
        Tensor<Real> acc = std::move(grads[0][p]);
        for (size_t k = 1; k < n; ++k) {
          const Tensor<Real>& g = grads[k][p];
          for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
        }
        for (int64_t i = 0; i < acc.numel(); ++i) acc[i] *= inv;
        mean_grads.push_back(std::move(acc));
      }

      last_lr = lr_at(meta.global_step, sched);
      opt.step(model.params(), mean_grads, last_lr);
      ++meta.global_step;
    }

    const EvalMetrics metrics = evaluate_model(model, test_ds, cfg.seed, threads);
    const double train_loss = epoch_loss / static_cast<double>(seen);

    nlohmann::json line;
    line["epoch"] = epoch;
    line["lr"] = last_lr;
    line["train_loss"] = train_loss;
    line["top1_pi"] = metrics.top1_pi;
    line["top5_pi"] = metrics.top5_pi;
    line["top1_pc"] = metrics.top1_pc;
    line["top5_pc"] = metrics.top5_pc;
    log << line.dump() << '\n';
    log.flush();

    meta.next_epoch = static_cast<uint32_t>(epoch + 1);
    save_checkpoint(result.last_path, meta, model.params(), opt);
    if (metrics.top1_pi > meta.best_top1) {
      meta.best_top1 = metrics.top1_pi;
      save_checkpoint(result.best_path, meta, model.params(), opt);
    }
    result.final_metrics = metrics;
    result.epochs_run = epoch + 1;
    if (stop_after_epoch >= 0 && epoch + 1 >= stop_after_epoch) break;
  }
  result.best_top1 = meta.best_top1;
  return result;
}

// Precision dispatch for the CLI surface.
inline TrainResult run_training(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                const std::filesystem::path& resume_from = {}) {
  if (cfg.precision == Precision::double_precision) {
    return train_model<double>(cfg, out_dir, resume_from);
  }
  return train_model<float>(cfg, out_dir, resume_from);
}

}  // namespace stepnet
