// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "cpeal/errors.hpp"
#include "cpeal/heads.hpp"
#include "cpeal/rng.hpp"

using namespace cpeal;

TEST_CASE("prompt head init is deterministic and rejects bad shapes") {
  const PromptHead a = init_prompt_head(4, 8, 7);
  const PromptHead b = init_prompt_head(4, 8, 7);
  CHECK(a.class_tokens == b.class_tokens);
  CHECK(a.context == b.context);

  const PromptHead c = init_prompt_head(4, 8, 8);
  CHECK(a.class_tokens != c.class_tokens);

  CHECK_THROWS_AS(init_prompt_head(0, 8, 7), ValidationError);
  CHECK_THROWS_AS(init_prompt_head(4, 0, 7), ValidationError);
}

TEST_CASE("prompt head trainable count is K * ctx * E") {
  const PromptHead head = init_prompt_head(4, 8, 7);
  CHECK(trainable_parameter_count(head) == 4 * 16 * 8);
  const PromptHead wide = init_prompt_head(10, 32, 7);
  CHECK(trainable_parameter_count(wide) == 10 * 16 * 32);
}

TEST_CASE("prompt prototypes stay unit norm") {
  const PromptHead head = init_prompt_head(6, 12, 3);
  const Matrix protos = prototypes(head);
  for (Index k = 0; k < protos.rows(); ++k)
    CHECK(protos.row(k).norm() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("orthogonal prototypes give saturated cosine logits") {
  PromptHead head = init_prompt_head(2, 2, 1);
  head.class_tokens << 1, 0, 0, 1;
  head.context.setZero();
  Matrix x(1, 2);
  x << 1, 0;

  const Activation act = forward(head, x);
  CHECK(act.logits(0, 0) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(act.logits(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(argmax_rows(act.logits)[0] == 0);
  CHECK(act.probs(0, 0) > 1.0 - 1e-6);
}

TEST_CASE("lora head at init equals the frozen projection exactly") {
  SplitMix64 rng(11);
  const Matrix w = gaussian_matrix(8, 4, 1.0, rng);
  const LoRAHead head = init_lora_head(w, 2, 5);
  const Matrix x = gaussian_matrix(16, 8, 1.0, rng);

  const Activation act = forward(head, x);
  const Matrix direct = x * w;
  CHECK((act.logits - direct).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("lora trainable count is r * (E + K)") {
  SplitMix64 rng(11);
  const Matrix w = gaussian_matrix(8, 4, 1.0, rng);
  CHECK(trainable_parameter_count(init_lora_head(w, 2, 5)) == 2 * (8 + 4));
  CHECK(trainable_parameter_count(init_lora_head(w, 3, 5)) == 3 * (8 + 4));
  CHECK_THROWS_AS(init_lora_head(w, 0, 5), ValidationError);
}

TEST_CASE("softmax of constant rows is uniform") {
  const Matrix logits = Matrix::Zero(3, 5);
  const Matrix probs = softmax_rows(logits);
  for (Index r = 0; r < 3; ++r)
    for (Index k = 0; k < 5; ++k)
      CHECK(probs(r, k) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one up to logit magnitude 1e4") {
  SplitMix64 rng(21);
  for (Real scale : {1.0, 10.0, 1e3, 1e4}) {
    const Matrix logits = gaussian_matrix(32, 7, scale, rng);
    const Matrix probs = softmax_rows(logits);
    CHECK(probs.minCoeff() >= 0.0);
    for (Index r = 0; r < probs.rows(); ++r)
      CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("argmax breaks ties toward the lowest class") {
  Matrix v(2, 3);
  v << 1, 1, 1, 0, 2, 2;
  const auto preds = argmax_rows(v);
  CHECK(preds[0] == 0);
  CHECK(preds[1] == 1);
}

TEST_CASE("forward validates the batch") {
  const PromptHead head = init_prompt_head(3, 4, 7);
  CHECK_THROWS_AS(forward(head, Matrix::Zero(2, 5)), ValidationError);
  Matrix bad = Matrix::Zero(2, 4);
  bad(1, 2) = std::numeric_limits<Real>::quiet_NaN();
  CHECK_THROWS_AS(forward(head, bad), ValidationError);
}

TEST_CASE("zero rows produce uniform probabilities, not NaN") {
  const PromptHead head = init_prompt_head(3, 4, 7);
  const Activation act = forward(head, Matrix::Zero(1, 4));
  CHECK(act.probs.allFinite());
  for (Index k = 0; k < 3; ++k)
    CHECK(act.probs(0, k) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}
