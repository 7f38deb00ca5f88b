// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cpeal/types.hpp"

namespace cpeal {

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

// A pool of fixed-dimension embeddings with integer class labels and a
// train/test split. This is the frozen-encoder output the rest of the
// pipeline consumes; it is immutable after construction and safe to share
// read-only across threads.
struct EmbeddingDataset {
  std::string name;
  Index num_classes = 0;
  std::vector<std::string> class_names;
  FeatureMatrix features;            // n x E, float32
  std::vector<std::int32_t> labels;  // n, each in [0, num_classes)
  std::vector<std::uint8_t> splits;  // n, Split values

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  bool is_train(Index row) const {
    return splits[static_cast<std::size_t>(row)] ==
           static_cast<std::uint8_t>(Split::kTrain);
  }

  std::vector<Index> train_indices() const;
  std::vector<Index> test_indices() const;
};

// Throws ValidationError if any dataset invariant is broken.
void validate(const EmbeddingDataset& ds);

// Rows gathered into a Real matrix for training math.
Matrix gather_features(const EmbeddingDataset& ds,
                       const std::vector<Index>& rows);
std::vector<int> gather_labels(const EmbeddingDataset& ds,
                               const std::vector<Index>& rows);

// CPEB, the on-disk container (all integers little-endian):
//   "CPEB"  u16 version=1  u32 n  u32 E  u32 K  u8 flags(bit0: labels)
//   u32-length-prefixed UTF-8 dataset name
//   K u32-length-prefixed UTF-8 class names
//   n*E float32 features, row-major
//   n int32 labels
//   n uint8 split tags (0 = train, 1 = test)
EmbeddingDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const EmbeddingDataset& ds,
                  const std::filesystem::path& path);

// Parameters for the synthetic Gaussian-blob stand-in datasets.
struct SynthSpec {
  Index num_classes = 0;
  Index dim = 0;
  Index per_class = 0;
  Real class_separation = 0;  // min distance between class means
  Real within_class_scale = 1.0;
  Real test_fraction = 0.25;
  std::uint64_t seed = 0;
};

void validate(const SynthSpec& spec);

// Deterministic in spec.seed, bit for bit. Class means are pairwise at
// distance >= class_separation: scaled coordinate axes when K <= E,
// otherwise random unit directions rescaled so the closest pair sits
// exactly at the separation.
EmbeddingDataset gen_synthetic(const SynthSpec& spec);

// The evolving labeled/unlabeled partition of the train split. `cycle`
// counts completed acquisition rounds and is advanced by the caller, not
// by reveal_labels.
struct PoolState {
  std::vector<Index> labeled_idx;    // sorted ascending
  std::vector<Index> unlabeled_idx;  // sorted ascending
  int cycle = 0;
};

PoolState make_pool(const EmbeddingDataset& ds);

// Moves `indices` from the unlabeled to the labeled pool. Throws
// SelectionError on duplicates or indices not currently unlabeled.
PoolState reveal_labels(const PoolState& pool,
                        const std::vector<Index>& indices);

}  // namespace cpeal
