// SPDX-License-Identifier: Apache-2.0
#include "cpeal/selection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "cpeal/calibration.hpp"
#include "cpeal/errors.hpp"

namespace cpeal {

Strategy strategy_from_name(std::string_view name) {
  if (name == "random") return Strategy::kRandom;
  if (name == "entropy") return Strategy::kEntropy;
  if (name == "softmax") return Strategy::kSoftmax;
  if (name == "margin") return Strategy::kMargin;
  if (name == "coreset") return Strategy::kCoreset;
  if (name == "badge") return Strategy::kBadge;
  if (name == "cpeal") return Strategy::kCpeal;
  throw ValidationError("unknown strategy: " + std::string(name));
}

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kRandom: return "random";
    case Strategy::kEntropy: return "entropy";
    case Strategy::kSoftmax: return "softmax";
    case Strategy::kMargin: return "margin";
    case Strategy::kCoreset: return "coreset";
    case Strategy::kBadge: return "badge";
    case Strategy::kCpeal: return "cpeal";
  }
  throw ValidationError("unknown strategy value");
}

bool is_quadratic_cost(Strategy strategy) {
  return strategy == Strategy::kCoreset || strategy == Strategy::kBadge;
}

ScoredPool score_uncertainty(Strategy strategy, const Matrix& probs,
                             const std::vector<Index>& pool_indices) {
  if (probs.rows() == 0) throw SelectionError("empty pool");
  if (static_cast<Index>(pool_indices.size()) != probs.rows())
    throw ValidationError("pool index list does not match probability rows");

  ScoredPool scored;
  scored.indices = pool_indices;
  scored.predicted = argmax_rows(probs);
  scored.scores.resize(probs.rows());

  switch (strategy) {
    case Strategy::kEntropy:
    case Strategy::kCpeal:
      scored.scores = entropy_rows(probs);
      break;
    case Strategy::kSoftmax:
      for (Index r = 0; r < probs.rows(); ++r)
        scored.scores(r) = 1.0 - probs.row(r).maxCoeff();
      break;
    case Strategy::kMargin:
      for (Index r = 0; r < probs.rows(); ++r) {
        Real top1 = -std::numeric_limits<Real>::infinity();
        Real top2 = -std::numeric_limits<Real>::infinity();
        for (Index k = 0; k < probs.cols(); ++k) {
          const Real p = probs(r, k);
          if (p > top1) {
            top2 = top1;
            top1 = p;
          } else if (p > top2) {
            top2 = p;
          }
        }
        if (probs.cols() < 2) top2 = 0;  // single-class pool degenerates
        scored.scores(r) = -(top1 - top2);
      }
      break;
    default:
      throw ValidationError("not an uncertainty scoring strategy");
  }
  return scored;
}

namespace {

// Pool positions ordered by score descending, position ascending on ties.
std::vector<Index> positions_by_score(const Vector& scores) {
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores(a) > scores(b); });
  return order;
}

}  // namespace

std::vector<Index> select_class_balanced(const ScoredPool& scored,
                                         Index num_classes, Index budget) {
  const Index n = scored.scores.size();
  if (n < budget) throw SelectionError("pool smaller than the budget");
  if (budget <= 0) throw SelectionError("budget must be positive");

  // Top-scoring pool position per predicted class.
  std::vector<Index> winner(static_cast<std::size_t>(num_classes), -1);
  for (Index pos = 0; pos < n; ++pos) {
    const auto c = static_cast<std::size_t>(scored.predicted[static_cast<std::size_t>(pos)]);
    if (winner[c] < 0 || scored.scores(pos) > scored.scores(winner[c]))
      winner[c] = pos;
  }
  std::vector<Index> winners;
  for (Index c = 0; c < num_classes; ++c)
    if (winner[static_cast<std::size_t>(c)] >= 0)
      winners.push_back(winner[static_cast<std::size_t>(c)]);
  std::stable_sort(winners.begin(), winners.end(), [&](Index a, Index b) {
    if (scored.scores(a) != scored.scores(b))
      return scored.scores(a) > scored.scores(b);
    return a < b;
  });

  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  std::vector<Index> picks;
  for (Index pos : winners) {
    if (static_cast<Index>(picks.size()) == budget) break;
    picks.push_back(pos);
    taken[static_cast<std::size_t>(pos)] = true;
  }
  // Classes with no predicted members leave a shortfall; fill it from the
  // global score order.
  if (static_cast<Index>(picks.size()) < budget) {
    for (Index pos : positions_by_score(scored.scores)) {
      if (taken[static_cast<std::size_t>(pos)]) continue;
      picks.push_back(pos);
      taken[static_cast<std::size_t>(pos)] = true;
      if (static_cast<Index>(picks.size()) == budget) break;
    }
  }

  std::vector<Index> rows;
  rows.reserve(picks.size());
  for (Index pos : picks) rows.push_back(scored.indices[static_cast<std::size_t>(pos)]);
  return rows;
}

std::vector<Index> select_coreset(const Matrix& labeled,
                                  const Matrix& unlabeled, Index budget) {
  const Index n = unlabeled.rows();
  if (budget > n) throw SelectionError("budget exceeds the unlabeled pool");
  if (budget <= 0) throw SelectionError("budget must be positive");

  // min_dist(i) = distance from pool point i to the covered set.
  Vector min_dist(n);
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  std::vector<Index> picks;

  if (labeled.rows() == 0) {
    picks.push_back(0);
    chosen[0] = true;
    for (Index i = 0; i < n; ++i)
      min_dist(i) = (unlabeled.row(i) - unlabeled.row(0)).norm();
  } else {
    for (Index i = 0; i < n; ++i) {
      Real best = std::numeric_limits<Real>::infinity();
      for (Index l = 0; l < labeled.rows(); ++l)
        best = std::min(best, (unlabeled.row(i) - labeled.row(l)).norm());
      min_dist(i) = best;
    }
  }

  while (static_cast<Index>(picks.size()) < budget) {
    Index far = -1;
    for (Index i = 0; i < n; ++i) {
      if (chosen[static_cast<std::size_t>(i)]) continue;
      if (far < 0 || min_dist(i) > min_dist(far)) far = i;  // tie: lowest index
    }
    picks.push_back(far);
    chosen[static_cast<std::size_t>(far)] = true;
    for (Index i = 0; i < n; ++i)
      min_dist(i) =
          std::min(min_dist(i), (unlabeled.row(i) - unlabeled.row(far)).norm());
  }
  return picks;
}

Matrix badge_gradient_embeddings(const Matrix& probs, const Matrix& feats) {
  if (probs.rows() != feats.rows())
    throw ValidationError("probs and features disagree on pool size");
  const Index n = probs.rows();
  const Index k = probs.cols();
  const Index e = feats.cols();
  const std::vector<int> preds = argmax_rows(probs);

  Matrix g(n, k * e);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < k; ++c) {
      const Real coeff =
          probs(i, c) - (preds[static_cast<std::size_t>(i)] == c ? 1.0 : 0.0);
      g.row(i).segment(c * e, e) = coeff * feats.row(i);
    }
  }
  return g;
}

std::vector<Index> kmeans_pp_indices(const Matrix& points, Index count,
                                     SplitMix64& rng) {
  const Index n = points.rows();
  if (count > n) throw SelectionError("requested more centers than points");
  if (count <= 0) throw SelectionError("count must be positive");

  std::vector<Index> centers;
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);

  const Index first = rng.below(n);
  centers.push_back(first);
  chosen[static_cast<std::size_t>(first)] = true;

  Vector d2(n);
  for (Index i = 0; i < n; ++i)
    d2(i) = (points.row(i) - points.row(first)).squaredNorm();
  d2(first) = 0;

  while (static_cast<Index>(centers.size()) < count) {
    const Real total = d2.sum();
    Index pick = -1;
    if (!(total > 0) || !std::isfinite(total)) {
      // Degenerate mass (duplicate points): uniform over the remainder.
      Index remaining = n - static_cast<Index>(centers.size());
      Index skip = rng.below(remaining);
      for (Index i = 0; i < n; ++i) {
        if (chosen[static_cast<std::size_t>(i)]) continue;
        if (skip-- == 0) {
          pick = i;
          break;
        }
      }
    } else {
      const Real target = rng.uniform() * total;
      Real acc = 0;
      Index last_positive = -1;
      for (Index i = 0; i < n && pick < 0; ++i) {
        if (d2(i) <= 0) continue;
        last_positive = i;
        acc += d2(i);
        if (target < acc) pick = i;
      }
      if (pick < 0) pick = last_positive;  // fp edge: target == total
    }
    centers.push_back(pick);
    chosen[static_cast<std::size_t>(pick)] = true;
    for (Index i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (points.row(i) - points.row(pick)).squaredNorm());
    d2(pick) = 0;
  }
  return centers;
}

std::vector<Index> select_badge(const Matrix& probs, const Matrix& feats,
                                Index budget, std::uint64_t seed) {
  if (budget > probs.rows())
    throw SelectionError("budget exceeds the unlabeled pool");
  const Matrix g = badge_gradient_embeddings(probs, feats);
  SplitMix64 rng(seed);
  return kmeans_pp_indices(g, budget, rng);
}

SelectionResult select(Strategy strategy, const Head& head,
                       const EmbeddingDataset& ds, const PoolState& pool,
                       Index budget, std::uint64_t seed) {
  if (budget <= 0) throw SelectionError("budget must be positive");
  if (budget > static_cast<Index>(pool.unlabeled_idx.size()))
    throw SelectionError("budget exceeds the unlabeled pool");

  const auto started = std::chrono::steady_clock::now();
  SelectionResult result;

  switch (strategy) {
    case Strategy::kRandom: {
      SplitMix64 rng(seed);
      for (Index pos : sample_without_replacement(
               static_cast<Index>(pool.unlabeled_idx.size()), budget, rng))
        result.indices.push_back(
            pool.unlabeled_idx[static_cast<std::size_t>(pos)]);
      break;
    }
    case Strategy::kEntropy:
    case Strategy::kSoftmax:
    case Strategy::kMargin:
    case Strategy::kCpeal: {
      const Matrix feats = gather_features(ds, pool.unlabeled_idx);
      const ScoredPool scored = score_uncertainty(
          strategy, forward(head, feats).probs, pool.unlabeled_idx);
      result.indices = select_class_balanced(scored, ds.num_classes, budget);
      break;
    }
    case Strategy::kCoreset: {
      const Matrix labeled = gather_features(ds, pool.labeled_idx);
      const Matrix unlabeled = gather_features(ds, pool.unlabeled_idx);
      for (Index pos : select_coreset(labeled, unlabeled, budget))
        result.indices.push_back(
            pool.unlabeled_idx[static_cast<std::size_t>(pos)]);
      break;
    }
    case Strategy::kBadge: {
      const Matrix feats = gather_features(ds, pool.unlabeled_idx);
      const Matrix probs = forward(head, feats).probs;
      for (Index pos : select_badge(probs, feats, budget, seed))
        result.indices.push_back(
            pool.unlabeled_idx[static_cast<std::size_t>(pos)]);
      break;
    }
  }

  result.elapsed_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();
  return result;
}

}  // namespace cpeal
