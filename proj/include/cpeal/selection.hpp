// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cpeal/dataset.hpp"
#include "cpeal/heads.hpp"
#include "cpeal/rng.hpp"
#include "cpeal/types.hpp"

namespace cpeal {

enum class Strategy {
  kRandom,
  kEntropy,
  kSoftmax,
  kMargin,
  kCoreset,
  kBadge,
  kCpeal,  // entropy scoring on a calibration-trained model
};

Strategy strategy_from_name(std::string_view name);
std::string_view to_string(Strategy strategy);

// Selection-cost class: one pool pass vs pairwise-distance work.
bool is_quadratic_cost(Strategy strategy);

// Scores over the unlabeled pool, larger = more informative. `indices` and
// the score/prediction arrays share the pool's ordering.
struct ScoredPool {
  std::vector<Index> indices;  // dataset row ids
  Vector scores;
  std::vector<int> predicted;  // argmax class per pool entry
};

// entropy/cpeal: H(p). softmax: 1 - max p. margin: -(top1 - top2).
ScoredPool score_uncertainty(Strategy strategy, const Matrix& probs,
                             const std::vector<Index>& pool_indices);

// Takes each predicted class's top-scoring sample, orders those winners by
// score, and fills any remaining budget from the global score order.
// Ties break toward the lower pool position. Returns dataset row ids.
std::vector<Index> select_class_balanced(const ScoredPool& scored,
                                         Index num_classes, Index budget);

// k-center greedy: repeatedly take the pool point farthest from the
// covered set (labeled rows plus previous picks). An empty labeled set is
// seeded with pool position 0. Returns positions into `unlabeled`.
std::vector<Index> select_coreset(const Matrix& labeled,
                                  const Matrix& unlabeled, Index budget);

// Loss-gradient embedding g_i = (p_i - onehot(argmax p_i)) (x) x_i,
// flattened class-major to length K*E.
Matrix badge_gradient_embeddings(const Matrix& probs, const Matrix& feats);

// k-means++ seeding over row vectors of `points`. Draw protocol, which an
// independent reference must replay: the first center is rng.below(n);
// each later center consumes one rng.uniform() scaled by the total squared
// distance mass and walks the cumulative sum in ascending point order.
// Zero total mass (duplicate points) falls back to rng.below over the
// not-yet-chosen points in ascending order.
std::vector<Index> kmeans_pp_indices(const Matrix& points, Index count,
                                     SplitMix64& rng);

// BADGE: k-means++ seeding over the gradient embeddings. Returns positions
// into the pool.
std::vector<Index> select_badge(const Matrix& probs, const Matrix& feats,
                                Index budget, std::uint64_t seed);

struct SelectionResult {
  std::vector<Index> indices;  // dataset row ids, all from the unlabeled pool
  double elapsed_ms = 0;
};

// Strategy dispatcher; scores with the given head where needed and times
// the whole call.
SelectionResult select(Strategy strategy, const Head& head,
                       const EmbeddingDataset& ds, const PoolState& pool,
                       Index budget, std::uint64_t seed);

}  // namespace cpeal
