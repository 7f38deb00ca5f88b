// SPDX-License-Identifier: Apache-2.0
#include "cpeal/trainer.hpp"

#include <cmath>
#include <numbers>

#include "cpeal/calibration.hpp"
#include "cpeal/errors.hpp"
#include "cpeal/rng.hpp"

namespace cpeal {

void validate(const TrainConfig& cfg) {
  if (!(cfg.base_lr > 0) || !(cfg.warmup_lr > 0))
    throw ValidationError("learning rates must be positive");
  if (cfg.warmup_epochs < 0) throw ValidationError("warmup_epochs must be >= 0");
  if (cfg.epochs < cfg.warmup_epochs || cfg.epochs < 1)
    throw ValidationError("epochs must be >= warmup_epochs and >= 1");
  if (cfg.weight_decay < 0) throw ValidationError("weight_decay must be >= 0");
  if (cfg.batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (cfg.alpha_final < 0) throw ValidationError("alpha_final must be >= 0");
}

Real lr_schedule(int epoch, const TrainConfig& cfg) {
  validate(cfg);
  if (epoch < 0 || epoch >= cfg.epochs)
    throw ValidationError("epoch outside [0, epochs)");
  if (epoch < cfg.warmup_epochs) return cfg.warmup_lr;
  // Denominator epochs-1-warmup so the ramp spans [base_lr, 0] inclusive:
  // the first post-warmup epoch gets base_lr, the last epoch gets 0.
  const int span = cfg.epochs - 1 - cfg.warmup_epochs;
  if (span <= 0) return cfg.base_lr;
  const Real frac = static_cast<Real>(epoch - cfg.warmup_epochs) /
                    static_cast<Real>(span);
  return 0.5 * cfg.base_lr * (1.0 + std::cos(std::numbers::pi * frac));
}

void write_csv(const TrainLog& log, std::ostream& out) {
  out << "cycle,epoch,iter,n_correct,n_incorrect,loss_ce,loss_calib,lr,alpha\n";
  for (const auto& e : log.entries)
    out << e.cycle << ',' << e.epoch << ',' << e.iter << ',' << e.n_correct
        << ',' << e.n_incorrect << ',' << e.loss_ce << ',' << e.loss_calib
        << ',' << e.lr << ',' << e.alpha << '\n';
}

namespace {

template <typename HeadT>
TrainLog train_cycle_impl(HeadT& head, const EmbeddingDataset& ds,
                          const PoolState& pool, const TrainConfig& cfg) {
  validate(cfg);
  TrainLog log;
  if (pool.labeled_idx.empty()) return log;  // zero-shot cycle, nothing to fit

  for (Index row : pool.labeled_idx)
    if (!ds.is_train(row))
      throw ValidationError("labeled pool contains a test-tagged row");

  const Matrix features = gather_features(ds, pool.labeled_idx);
  const std::vector<int> labels = gather_labels(ds, pool.labeled_idx);
  const Index n = features.rows();
  const Index iters_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const Index total_steps = static_cast<Index>(cfg.epochs) * iters_per_epoch;

  std::vector<Index> order(static_cast<std::size_t>(n));
  Index step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    SplitMix64 shuffle_rng(mix_seed(cfg.seed,
                                    static_cast<std::uint64_t>(pool.cycle),
                                    static_cast<std::uint64_t>(epoch)));
    shuffle(order, shuffle_rng);
    const Real lr = lr_schedule(epoch, cfg);

    for (Index start = 0, iter = 0; start < n;
         start += cfg.batch_size, ++iter, ++step) {
      const Index m = std::min(cfg.batch_size, n - start);
      Matrix batch(m, features.cols());
      std::vector<int> batch_labels(static_cast<std::size_t>(m));
      for (Index i = 0; i < m; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        batch.row(i) = features.row(src);
        batch_labels[static_cast<std::size_t>(i)] =
            labels[static_cast<std::size_t>(src)];
      }

      const Real alpha = cfg.anneal ? anneal_alpha(step + 1, total_steps,
                                                   cfg.alpha_final)
                                    : cfg.alpha_final;
      const Activation act = forward(head, batch);
      const CalibBatchLoss loss =
          calib_loss(act.probs, batch_labels, alpha, cfg.interw);
      const Matrix grad =
          grad_total_loss(act.logits, batch_labels, alpha, cfg.interw);
      sgd_step(head, batch, grad, lr, cfg.weight_decay);

      log.entries.push_back({pool.cycle, epoch, static_cast<int>(iter),
                             loss.n_correct, loss.n_incorrect, loss.ce,
                             loss.calib, lr, alpha});
    }
  }
  return log;
}

}  // namespace

TrainLog train_cycle(PromptHead& head, const EmbeddingDataset& ds,
                     const PoolState& pool, const TrainConfig& cfg) {
  return train_cycle_impl(head, ds, pool, cfg);
}

TrainLog train_cycle(LoRAHead& head, const EmbeddingDataset& ds,
                     const PoolState& pool, const TrainConfig& cfg) {
  return train_cycle_impl(head, ds, pool, cfg);
}

TrainLog train_cycle(Head& head, const EmbeddingDataset& ds,
                     const PoolState& pool, const TrainConfig& cfg) {
  return std::visit(
      [&](auto& h) { return train_cycle_impl(h, ds, pool, cfg); }, head);
}

}  // namespace cpeal
