// SPDX-License-Identifier: Apache-2.0
#include "cpeal/heads.hpp"

#include <cmath>
#include <iostream>

#include "cpeal/errors.hpp"
#include "cpeal/rng.hpp"

namespace cpeal {

namespace {

constexpr Real kNormFloor = 1e-12;

// Unit-normalize rows; all-zero rows stay zero (their cosines read 0).
Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Index r = 0; r < out.rows(); ++r) {
    const Real norm = out.row(r).norm();
    if (norm > kNormFloor) out.row(r) /= norm;
  }
  return out;
}

void check_batch(const Matrix& batch, Index dim) {
  if (batch.cols() != dim)
    throw ValidationError("batch has " + std::to_string(batch.cols()) +
                          " columns, head expects " + std::to_string(dim));
  if (!batch.allFinite())
    throw ValidationError("batch contains NaN or Inf");
}

}  // namespace

PromptHead init_prompt_head(Index num_classes, Index dim, std::uint64_t seed,
                            Index ctx, Real logit_scale) {
  if (num_classes <= 0 || dim <= 0)
    throw ValidationError("prompt head needs positive class count and dim");
  if (ctx <= 0) throw ValidationError("ctx must be positive");
  if (!(logit_scale > 0)) throw ValidationError("logit_scale must be positive");

  SplitMix64 rng(seed);
  PromptHead head;
  head.ctx = ctx;
  head.logit_scale = logit_scale;
  head.class_tokens = normalize_rows(gaussian_matrix(num_classes, dim, 1.0, rng));
  head.context = gaussian_matrix(num_classes * ctx, dim, 0.02, rng);
  return head;
}

LoRAHead init_lora_head(const Matrix& frozen_weight, Index rank,
                        std::uint64_t seed, Real lora_scale) {
  if (rank <= 0) throw ValidationError("lora rank must be positive");
  if (frozen_weight.rows() <= 0 || frozen_weight.cols() <= 0)
    throw ValidationError("frozen projection must be non-empty");
  if (!(lora_scale > 0)) throw ValidationError("lora_scale must be positive");
  if (rank > std::min(frozen_weight.rows(), frozen_weight.cols()))
    std::cerr << "warning: lora rank " << rank << " exceeds min(E, K) = "
              << std::min(frozen_weight.rows(), frozen_weight.cols()) << "\n";

  SplitMix64 rng(seed);
  LoRAHead head;
  head.frozen_weight = frozen_weight;
  head.lora_scale = lora_scale;
  head.lora_a = gaussian_matrix(frozen_weight.rows(), rank, 0.02, rng);
  head.lora_b = Matrix::Zero(rank, frozen_weight.cols());
  return head;
}

Index trainable_parameter_count(const PromptHead& head) {
  return head.context.size();
}

Index trainable_parameter_count(const LoRAHead& head) {
  return head.lora_a.size() + head.lora_b.size();
}

Index trainable_parameter_count(const Head& head) {
  return std::visit([](const auto& h) { return trainable_parameter_count(h); },
                    head);
}

Matrix prototypes(const PromptHead& head) {
  Matrix protos(head.num_classes(), head.dim());
  for (Index k = 0; k < head.num_classes(); ++k)
    protos.row(k) =
        head.class_tokens.row(k) + head.context_block(k).colwise().mean();
  return normalize_rows(protos);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const Real max = logits.row(r).maxCoeff();
    probs.row(r) = (logits.row(r).array() - max).exp();
    probs.row(r) /= probs.row(r).sum();
  }
  return probs;
}

std::vector<int> argmax_rows(const Matrix& values) {
  std::vector<int> out(static_cast<std::size_t>(values.rows()));
  for (Index r = 0; r < values.rows(); ++r) {
    int best = 0;
    for (Index c = 1; c < values.cols(); ++c)
      if (values(r, c) > values(r, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

Activation forward(const PromptHead& head, const Matrix& batch) {
  check_batch(batch, head.dim());
  const Matrix logits =
      head.logit_scale * normalize_rows(batch) * prototypes(head).transpose();
  return {logits, softmax_rows(logits)};
}

Activation forward(const LoRAHead& head, const Matrix& batch) {
  check_batch(batch, head.dim());
  const Matrix logits =
      batch * (head.frozen_weight + head.lora_scale * (head.lora_a * head.lora_b));
  return {logits, softmax_rows(logits)};
}

Activation forward(const Head& head, const Matrix& batch) {
  return std::visit([&](const auto& h) { return forward(h, batch); }, head);
}

void sgd_step(PromptHead& head, const Matrix& batch, const Matrix& grad_logits,
              Real lr, Real weight_decay) {
  const Matrix x_hat = normalize_rows(batch);
  // The prototype t_k = u_k / |u_k| with u_k = token_k + mean(context_k);
  // d logits(i,k)/d u_k = tau/|u_k| * (x_hat_i - (x_hat_i . t_k) t_k), and
  // the context mean spreads that gradient evenly over the ctx rows.
  for (Index k = 0; k < head.num_classes(); ++k) {
    RowVector u = head.class_tokens.row(k) +
                  head.context_block(k).colwise().mean();
    const Real norm = std::max(u.norm(), kNormFloor);
    const RowVector t = u / norm;
    const RowVector s = grad_logits.col(k).transpose() * x_hat;  // sum_i G_ik x_hat_i
    const RowVector grad_u = (head.logit_scale / norm) * (s - (s.dot(t)) * t);
    const RowVector per_row = grad_u / static_cast<Real>(head.ctx);
    auto block = head.context_block(k);
    block -= lr * ((per_row.replicate(head.ctx, 1)) + weight_decay * block);
  }
}

void sgd_step(LoRAHead& head, const Matrix& batch, const Matrix& grad_logits,
              Real lr, Real weight_decay) {
  // Both gradients are taken at the pre-update parameters.
  const Matrix xt_g = batch.transpose() * grad_logits;  // E x K
  const Matrix grad_a = head.lora_scale * xt_g * head.lora_b.transpose();
  const Matrix grad_b = head.lora_scale * head.lora_a.transpose() * xt_g;
  head.lora_a -= lr * (grad_a + weight_decay * head.lora_a);
  head.lora_b -= lr * (grad_b + weight_decay * head.lora_b);
}

void sgd_step(Head& head, const Matrix& batch, const Matrix& grad_logits,
              Real lr, Real weight_decay) {
  std::visit([&](auto& h) { sgd_step(h, batch, grad_logits, lr, weight_decay); },
             head);
}

}  // namespace cpeal
