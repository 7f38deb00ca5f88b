// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "cpeal/dataset.hpp"
#include "cpeal/heads.hpp"
#include "cpeal/types.hpp"

namespace cpeal {

struct TrainConfig {
  Real base_lr = 0.002;
  Real warmup_lr = 1e-5;
  int warmup_epochs = 1;
  int epochs = 200;
  Real weight_decay = 0.0005;
  Index batch_size = 32;
  Real alpha_final = 0.5;
  bool anneal = true;   // ramp alpha linearly over the cycle's steps
  bool interw = true;   // count-balanced gamma/beta vs fixed 0.5/0.5
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

// Constant warmup_lr through the warmup epochs, then a cosine ramp from
// base_lr down to exactly zero on the final epoch.
Real lr_schedule(int epoch, const TrainConfig& cfg);

struct TrainLogEntry {
  int cycle = 0;
  int epoch = 0;
  int iter = 0;
  Index n_correct = 0;
  Index n_incorrect = 0;
  Real loss_ce = 0;
  Real loss_calib = 0;
  Real lr = 0;
  Real alpha = 0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
};

// Columns: cycle,epoch,iter,n_correct,n_incorrect,loss_ce,loss_calib,lr,alpha
void write_csv(const TrainLog& log, std::ostream& out);

// Mini-batch SGD over the labeled pool with the combined loss. The head is
// trained in place; an empty labeled pool returns it untouched with an
// empty log. Deterministic given (head, cfg.seed, pool.cycle).
TrainLog train_cycle(Head& head, const EmbeddingDataset& ds,
                     const PoolState& pool, const TrainConfig& cfg);
TrainLog train_cycle(PromptHead& head, const EmbeddingDataset& ds,
                     const PoolState& pool, const TrainConfig& cfg);
TrainLog train_cycle(LoRAHead& head, const EmbeddingDataset& ds,
                     const PoolState& pool, const TrainConfig& cfg);

}  // namespace cpeal
