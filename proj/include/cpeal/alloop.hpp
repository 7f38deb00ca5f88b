// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpeal/dataset.hpp"
#include "cpeal/selection.hpp"
#include "cpeal/trainer.hpp"
#include "cpeal/types.hpp"

namespace cpeal {

enum class HeadKind { kPrompt, kLora };
enum class FrozenProjection { kClassSeed, kOrthonormal };

struct HeadConfig {
  HeadKind kind = HeadKind::kPrompt;
  // prompt
  Index ctx = 16;
  Real logit_scale = 100.0;
  // lora
  Index rank = 2;
  Real lora_scale = 1.0;
  FrozenProjection frozen = FrozenProjection::kClassSeed;
};

struct ExperimentConfig {
  std::optional<std::string> dataset_path;
  std::optional<SynthSpec> synth;
  HeadConfig head;
  TrainConfig train;
  std::vector<Strategy> strategies;
  int cycles = 8;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  Index budget_per_cycle = 0;  // 0 means K, one sample per class
  Index initial_labeled_per_class = 0;
  int ece_bins = 15;
};

void validate(const ExperimentConfig& cfg);

ExperimentConfig default_experiment_config();
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Frozen projection for LoRA heads, fixed per run before any cycle: one
// seeded train embedding per class as its column, or a random orthonormal
// basis slice.
Matrix make_frozen_projection(const EmbeddingDataset& ds,
                              FrozenProjection mode, std::uint64_t seed);

struct CycleRecord {
  std::uint64_t seed = 0;
  int cycle = 0;
  Strategy strategy = Strategy::kRandom;
  Index n_labeled = 0;
  Real accuracy = 0;
  Real ece = 0;
  std::vector<Index> selected;
  double selection_time_ms = 0;
  double train_time_ms = 0;
};

// Runs the full loop for every (seed, strategy): per cycle the head is
// reinitialized from hash(seed, cycle), trained on the current labeled
// pool (skipped while it is empty), the budget is selected and revealed,
// and the test split is evaluated. Records come back in canonical
// (seed, strategy, cycle) order regardless of `jobs`.
std::vector<CycleRecord> run_experiment(const ExperimentConfig& cfg,
                                        const EmbeddingDataset& ds,
                                        int jobs = 1);

// Resolves the dataset (path or synthetic spec), runs, and writes
// results.csv under out_dir.
std::vector<CycleRecord> run_experiment(const ExperimentConfig& cfg,
                                        const std::filesystem::path& out_dir,
                                        int jobs = 1);

// results.csv columns, in order:
// seed,cycle,strategy,n_labeled,accuracy,ece,selection_time_ms,train_time_ms
void write_results_csv(const std::vector<CycleRecord>& records,
                       const std::filesystem::path& path);
std::vector<CycleRecord> read_results_csv(const std::filesystem::path& path);

struct SummaryRow {
  std::string strategy;
  int cycle = 0;
  Real acc_mean = 0;
  Real acc_std = 0;
  Real ece_mean = 0;
  Real ece_std = 0;
  Real delta_vs_entropy = 0;
};

// Aggregates every results.csv in `results_dir` (top level plus immediate
// subdirectories) into per-(strategy, cycle) means and sample standard
// deviations across seeds, writes summary.csv there, and returns the rows.
std::vector<SummaryRow> aggregate_report(
    const std::filesystem::path& results_dir);

// Plain-text table of a summary, for terminal output.
std::string format_summary(const std::vector<SummaryRow>& rows);

}  // namespace cpeal
