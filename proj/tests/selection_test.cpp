// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cpeal/errors.hpp"
#include "cpeal/selection.hpp"

using namespace cpeal;

namespace {

std::vector<Index> iota_indices(Index n) {
  std::vector<Index> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

// Brute-force k-center greedy: recompute every distance each round.
std::vector<Index> coreset_oracle(const Matrix& labeled,
                                  const Matrix& unlabeled, Index budget) {
  std::vector<Index> picks;
  std::vector<bool> chosen(static_cast<std::size_t>(unlabeled.rows()), false);
  if (labeled.rows() == 0) {
    picks.push_back(0);
    chosen[0] = true;
  }
  while (static_cast<Index>(picks.size()) < budget) {
    Index best = -1;
    Real best_dist = -1;
    for (Index i = 0; i < unlabeled.rows(); ++i) {
      if (chosen[static_cast<std::size_t>(i)]) continue;
      Real nearest = std::numeric_limits<Real>::infinity();
      for (Index l = 0; l < labeled.rows(); ++l)
        nearest = std::min(nearest, (unlabeled.row(i) - labeled.row(l)).norm());
      for (Index p : picks)
        nearest =
            std::min(nearest, (unlabeled.row(i) - unlabeled.row(p)).norm());
      if (nearest > best_dist) {  // strict: ties keep the lowest index
        best_dist = nearest;
        best = i;
      }
    }
    picks.push_back(best);
    chosen[static_cast<std::size_t>(best)] = true;
  }
  return picks;
}

// Independent replay of the documented k-means++ draw protocol, with
// from-scratch distance recomputation every round.
std::vector<Index> kmeans_pp_reference(const Matrix& points, Index count,
                                       SplitMix64& rng) {
  std::vector<Index> centers{rng.below(points.rows())};
  while (static_cast<Index>(centers.size()) < count) {
    Vector d2(points.rows());
    for (Index i = 0; i < points.rows(); ++i) {
      Real nearest = std::numeric_limits<Real>::infinity();
      for (Index c : centers)
        nearest = std::min(nearest, (points.row(i) - points.row(c)).squaredNorm());
      d2(i) = nearest;
    }
    for (Index c : centers) d2(c) = 0;
    const Real total = d2.sum();
    Index pick = -1;
    if (!(total > 0)) {
      Index skip = rng.below(points.rows() - static_cast<Index>(centers.size()));
      for (Index i = 0; i < points.rows(); ++i) {
        if (std::find(centers.begin(), centers.end(), i) != centers.end())
          continue;
        if (skip-- == 0) {
          pick = i;
          break;
        }
      }
    } else {
      const Real target = rng.uniform() * total;
      Real acc = 0;
      Index last_positive = -1;
      for (Index i = 0; i < points.rows() && pick < 0; ++i) {
        if (d2(i) <= 0) continue;
        last_positive = i;
        acc += d2(i);
        if (target < acc) pick = i;
      }
      if (pick < 0) pick = last_positive;
    }
    centers.push_back(pick);
  }
  return centers;
}

}  // namespace

TEST_CASE("uncertainty scores match their definitions") {
  Matrix probs(1, 3);
  probs << 0.5, 0.3, 0.2;
  const auto pool = iota_indices(1);

  CHECK(score_uncertainty(Strategy::kEntropy, probs, pool).scores(0) ==
        doctest::Approx(1.0296530140645737).epsilon(1e-12));
  CHECK(score_uncertainty(Strategy::kCpeal, probs, pool).scores(0) ==
        doctest::Approx(1.0296530140645737).epsilon(1e-12));
  CHECK(score_uncertainty(Strategy::kSoftmax, probs, pool).scores(0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(score_uncertainty(Strategy::kMargin, probs, pool).scores(0) ==
        doctest::Approx(-0.2).epsilon(1e-12));
}

TEST_CASE("degenerate rows score at the extremes") {
  const Index k = 4;
  Matrix uniform = Matrix::Constant(2, k, 1.0 / k);
  const auto pool2 = iota_indices(2);
  const auto entropy_scores =
      score_uncertainty(Strategy::kEntropy, uniform, pool2);
  for (Index i = 0; i < 2; ++i)
    CHECK(entropy_scores.scores(i) ==
          doctest::Approx(std::log(static_cast<Real>(k))).epsilon(1e-12));

  Matrix onehot = Matrix::Zero(1, k);
  onehot(0, 2) = 1;
  const auto pool1 = iota_indices(1);
  CHECK(score_uncertainty(Strategy::kEntropy, onehot, pool1).scores(0) == 0.0);
  CHECK(score_uncertainty(Strategy::kSoftmax, onehot, pool1).scores(0) == 0.0);
  CHECK(score_uncertainty(Strategy::kMargin, onehot, pool1).scores(0) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(score_uncertainty(Strategy::kEntropy, onehot, pool1).predicted[0] == 2);
}

TEST_CASE("empty pool cannot be scored") {
  CHECK_THROWS_AS(score_uncertainty(Strategy::kEntropy, Matrix(0, 3), {}),
                  SelectionError);
}

TEST_CASE("class-balanced selection takes each class's top sample") {
  ScoredPool scored;
  scored.indices = {0, 1, 2, 3};
  scored.predicted = {0, 1, 0, 1};
  scored.scores = (Vector(4) << 0.9, 0.8, 0.7, 0.95).finished();

  const auto picks = select_class_balanced(scored, 2, 2);
  CHECK(std::set<Index>(picks.begin(), picks.end()) ==
        std::set<Index>{0, 3});
}

TEST_CASE("classes with no members are filled from the global order") {
  ScoredPool scored;
  scored.indices = {0, 1, 2};
  scored.predicted = {0, 0, 0};
  scored.scores = (Vector(3) << 0.9, 0.8, 0.7).finished();

  const auto picks = select_class_balanced(scored, 2, 2);
  CHECK(std::set<Index>(picks.begin(), picks.end()) ==
        std::set<Index>{0, 1});
}

TEST_CASE("budget equal to the pool exhausts it") {
  ScoredPool scored;
  scored.indices = {10, 11, 12};
  scored.predicted = {0, 1, 2};
  scored.scores = (Vector(3) << 0.5, 0.4, 0.3).finished();

  const auto picks = select_class_balanced(scored, 3, 3);
  CHECK(std::set<Index>(picks.begin(), picks.end()) ==
        std::set<Index>{10, 11, 12});
  CHECK_THROWS_AS(select_class_balanced(scored, 3, 4), SelectionError);
}

TEST_CASE("budget below the class count keeps the best-scoring winners") {
  ScoredPool scored;
  scored.indices = {0, 1, 2, 3};
  scored.predicted = {0, 1, 2, 3};
  scored.scores = (Vector(4) << 0.2, 1.2, 0.4, 0.1).finished();
  // global top scorer wins when only one slot exists
  CHECK(select_class_balanced(scored, 4, 1) == std::vector<Index>{1});
}

TEST_CASE("coreset greedy reproduces the 1-d walkthrough") {
  Matrix labeled(1, 1);
  labeled << 0.0;
  Matrix unlabeled(3, 1);
  unlabeled << 1.0, 5.0, 9.0;

  CHECK(select_coreset(labeled, unlabeled, 2) == std::vector<Index>{2, 1});
  CHECK(select_coreset(labeled, unlabeled, 1) == std::vector<Index>{2});
  CHECK_THROWS_AS(select_coreset(labeled, unlabeled, 4), SelectionError);
}

TEST_CASE("coreset with no labeled rows seeds from position zero") {
  Matrix unlabeled(4, 2);
  unlabeled << 1, 1, 1, 1, 1, 1, 1, 1;  // all duplicates: tie rule decides
  const auto picks = select_coreset(Matrix(0, 2), unlabeled, 3);
  CHECK(picks == std::vector<Index>{0, 1, 2});
}

TEST_CASE("coreset matches the brute-force oracle on random instances") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const Index n = 2 + rng.below(31);
    const Index dim = 1 + rng.below(6);
    const Index n_labeled = rng.below(5);
    const Matrix unlabeled = gaussian_matrix(n, dim, 1.0, rng);
    const Matrix labeled = gaussian_matrix(n_labeled, dim, 1.0, rng);
    const Index budget = 1 + rng.below(n);

    CHECK(select_coreset(labeled, unlabeled, budget) ==
          coreset_oracle(labeled, unlabeled, budget));
  }
}

TEST_CASE("badge gradient embedding follows the outer-product formula") {
  Matrix probs(1, 2);
  probs << 0.6, 0.4;
  Matrix feats(1, 2);
  feats << 1, 2;

  const Matrix g = badge_gradient_embeddings(probs, feats);
  REQUIRE(g.cols() == 4);
  CHECK(g(0, 0) == doctest::Approx(-0.4).epsilon(1e-12));
  CHECK(g(0, 1) == doctest::Approx(-0.8).epsilon(1e-12));
  CHECK(g(0, 2) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(g(0, 3) == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("kmeans++ seeding matches an independent reference") {
  SplitMix64 data_rng(123);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 2 + data_rng.below(63);
    const Index dim = 1 + data_rng.below(8);
    const Matrix points = gaussian_matrix(n, dim, 1.0, data_rng);
    const Index count = 1 + data_rng.below(std::min<Index>(n, 10));
    const std::uint64_t seed = data_rng.next();

    SplitMix64 impl_rng(seed);
    SplitMix64 ref_rng(seed);
    CHECK(kmeans_pp_indices(points, count, impl_rng) ==
          kmeans_pp_reference(points, count, ref_rng));
  }
}

TEST_CASE("badge selection is deterministic and falls back on duplicates") {
  SplitMix64 rng(9);
  const Matrix feats = gaussian_matrix(20, 4, 1.0, rng);
  const Matrix probs = softmax_rows(gaussian_matrix(20, 3, 1.0, rng));

  const auto a = select_badge(probs, feats, 5, 42);
  const auto b = select_badge(probs, feats, 5, 42);
  CHECK(a == b);
  CHECK(std::set<Index>(a.begin(), a.end()).size() == 5);

  // identical embeddings: seeded uniform sampling without replacement
  const Matrix same_feats = Matrix::Ones(10, 4);
  const Matrix same_probs = Matrix::Constant(10, 3, 1.0 / 3);
  const auto c = select_badge(same_probs, same_feats, 10, 7);
  CHECK(std::set<Index>(c.begin(), c.end()).size() == 10);

  const auto all = select_badge(probs, feats, 20, 1);
  CHECK(std::set<Index>(all.begin(), all.end()).size() == 20);
}

TEST_CASE("scaling all scores leaves the class-balanced choice unchanged") {
  SplitMix64 rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 6 + rng.below(40);
    ScoredPool scored;
    scored.indices = iota_indices(n);
    scored.scores.resize(n);
    scored.predicted.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      scored.scores(i) = rng.uniform();
      scored.predicted[static_cast<std::size_t>(i)] =
          static_cast<int>(rng.below(3));
    }
    ScoredPool scaled = scored;
    scaled.scores *= 7.5;
    CHECK(select_class_balanced(scored, 3, 3) ==
          select_class_balanced(scaled, 3, 3));
  }
}

TEST_CASE("the dispatcher returns distinct unlabeled rows for every strategy") {
  SynthSpec spec;
  spec.num_classes = 5;
  spec.dim = 6;
  spec.per_class = 30;
  spec.class_separation = 4;
  spec.within_class_scale = 1;
  spec.test_fraction = 0.2;
  spec.seed = 2;
  const EmbeddingDataset ds = gen_synthetic(spec);

  PoolState pool = make_pool(ds);
  pool = reveal_labels(pool, {pool.unlabeled_idx[0], pool.unlabeled_idx[5]});
  const Head head = init_prompt_head(ds.num_classes, ds.dim(), 3);

  for (Strategy strategy :
       {Strategy::kRandom, Strategy::kEntropy, Strategy::kSoftmax,
        Strategy::kMargin, Strategy::kCoreset, Strategy::kBadge,
        Strategy::kCpeal}) {
    const SelectionResult result = select(strategy, head, ds, pool, 5, 123);
    CHECK(result.indices.size() == 5);
    std::set<Index> unique(result.indices.begin(), result.indices.end());
    CHECK(unique.size() == 5);
    for (Index idx : result.indices)
      CHECK(std::binary_search(pool.unlabeled_idx.begin(),
                               pool.unlabeled_idx.end(), idx));
    CHECK(result.elapsed_ms >= 0.0);
    // repeat run picks the same set
    CHECK(select(strategy, head, ds, pool, 5, 123).indices == result.indices);
  }

  CHECK_THROWS_AS(
      select(Strategy::kRandom, head, ds, pool,
             static_cast<Index>(pool.unlabeled_idx.size()) + 1, 123),
      SelectionError);
}

TEST_CASE("entropy dispatch surfaces the one uncertain sample") {
  // Pool of near-one-hot rows plus a single uniform row: with budget 1 the
  // uniform row must win regardless of its predicted class.
  SynthSpec spec;
  spec.num_classes = 3;
  spec.dim = 3;
  spec.per_class = 10;
  spec.class_separation = 40;
  spec.within_class_scale = 0.05;
  spec.test_fraction = 0.2;
  spec.seed = 6;
  EmbeddingDataset ds = gen_synthetic(spec);
  // zero embedding -> zero cosine logits -> exactly uniform probabilities
  const Index uniform_row = ds.train_indices()[3];
  ds.features.row(uniform_row).setZero();

  PromptHead head = init_prompt_head(ds.num_classes, ds.dim(), 1);
  head.context.setZero();
  head.class_tokens.setIdentity();  // prototypes = axes, blobs sit on axes

  const PoolState pool = make_pool(ds);
  const SelectionResult result =
      select(Strategy::kEntropy, Head(head), ds, pool, 1, 5);
  REQUIRE(result.indices.size() == 1);
  CHECK(result.indices[0] == uniform_row);
}

TEST_CASE("strategy names round trip and carry the cost taxonomy") {
  for (const char* name :
       {"random", "entropy", "softmax", "margin", "coreset", "badge", "cpeal"})
    CHECK(to_string(strategy_from_name(name)) == name);
  CHECK_THROWS_AS(strategy_from_name("bald"), ValidationError);

  CHECK(is_quadratic_cost(Strategy::kCoreset));
  CHECK(is_quadratic_cost(Strategy::kBadge));
  for (Strategy s : {Strategy::kRandom, Strategy::kEntropy, Strategy::kSoftmax,
                     Strategy::kMargin, Strategy::kCpeal})
    CHECK_FALSE(is_quadratic_cost(s));
}
