// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <variant>

#include "cpeal/types.hpp"

namespace cpeal {

// Prompt-style head: one frozen unit token per class plus a trainable
// context block of `ctx` vectors per class. The class prototype is the
// normalized sum of the frozen token and the context mean; logits are
// scaled cosines against it.
struct PromptHead {
  Matrix class_tokens;  // K x E, frozen, unit rows
  Matrix context;       // (K*ctx) x E, trainable
  Index ctx = 16;
  Real logit_scale = 100.0;

  Index num_classes() const { return class_tokens.rows(); }
  Index dim() const { return class_tokens.cols(); }
  auto context_block(Index k) { return context.middleRows(k * ctx, ctx); }
  auto context_block(Index k) const { return context.middleRows(k * ctx, ctx); }
};

// Low-rank adapter over a frozen projection: logits = X (W + scale * A B).
// B starts at zero so the head is exactly the frozen projection at init.
struct LoRAHead {
  Matrix frozen_weight;  // E x K, never trained
  Matrix lora_a;         // E x r, trainable
  Matrix lora_b;         // r x K, trainable
  Real lora_scale = 1.0;

  Index num_classes() const { return frozen_weight.cols(); }
  Index dim() const { return frozen_weight.rows(); }
  Index rank() const { return lora_a.cols(); }
};

using Head = std::variant<PromptHead, LoRAHead>;

PromptHead init_prompt_head(Index num_classes, Index dim, std::uint64_t seed,
                            Index ctx = 16, Real logit_scale = 100.0);
LoRAHead init_lora_head(const Matrix& frozen_weight, Index rank,
                        std::uint64_t seed, Real lora_scale = 1.0);

Index trainable_parameter_count(const PromptHead& head);
Index trainable_parameter_count(const LoRAHead& head);
Index trainable_parameter_count(const Head& head);

// K x E prototype matrix with unit rows (zero rows are left as zeros).
Matrix prototypes(const PromptHead& head);

// Row-wise softmax with max subtraction; rows sum to 1 for logit
// magnitudes up to at least 1e4.
Matrix softmax_rows(const Matrix& logits);

// Row-wise argmax, ties resolved to the lowest class index.
std::vector<int> argmax_rows(const Matrix& values);

struct Activation {
  Matrix logits;  // m x K
  Matrix probs;   // m x K, rows on the simplex
};

Activation forward(const PromptHead& head, const Matrix& batch);
Activation forward(const LoRAHead& head, const Matrix& batch);
Activation forward(const Head& head, const Matrix& batch);

// One SGD step on the trainable tensors from d(loss)/d(logits). Weight
// decay touches trainable tensors only; frozen tensors are never written.
void sgd_step(PromptHead& head, const Matrix& batch, const Matrix& grad_logits,
              Real lr, Real weight_decay);
void sgd_step(LoRAHead& head, const Matrix& batch, const Matrix& grad_logits,
              Real lr, Real weight_decay);
void sgd_step(Head& head, const Matrix& batch, const Matrix& grad_logits,
              Real lr, Real weight_decay);

}  // namespace cpeal
