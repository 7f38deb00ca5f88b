// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "cpeal/types.hpp"

namespace cpeal {

// Numerical guard inside the calibration log terms, fixed by contract.
inline constexpr Real kCalibEpsilon = 1e-6;

// Shannon entropy in nats; zero entries contribute zero. The input must be
// a distribution: non-negative entries summing to 1 within 1e-6.
Real entropy(const Vector& p);

// Per-row entropy of a probability matrix (rows validated as above).
Vector entropy_rows(const Matrix& probs);

// Splits batch positions into (incorrect, correct) by prediction match.
std::pair<std::vector<Index>, std::vector<Index>> partition(
    const std::vector<int>& preds, const std::vector<int>& labels);

// Per-mini-batch loss breakdown.
//
//   incorrect_loss = mean over wrong predictions of -log(tanh(H) + eps)
//   correct_loss   = mean over right predictions of -log(1 - tanh(H) + eps)
//   calib          = gamma_correct * correct_loss + beta_incorrect * incorrect_loss
//   total          = ce + alpha * calib
//
// Means over an empty side are zero, so a batch that is entirely correct or
// entirely incorrect contributes no calibration loss under the balanced
// weights.
struct CalibBatchLoss {
  Real ce = 0;
  Real incorrect_loss = 0;   // L_I
  Real correct_loss = 0;     // L_C
  Real gamma_correct = 0;    // weight on correct_loss
  Real beta_incorrect = 0;   // weight on incorrect_loss
  Real alpha = 0;
  Index n_correct = 0;
  Index n_incorrect = 0;
  Real calib = 0;
  Real total = 0;
};

// `balanced` selects the count-based weights (gamma = n_inc/n, beta =
// n_cor/n); otherwise both weights are fixed at 0.5.
CalibBatchLoss calib_loss(const Matrix& probs, const std::vector<int>& labels,
                          Real alpha, bool balanced = true);

// Scalar total loss straight from logits (cross entropy via log-sum-exp);
// the forward counterpart of grad_total_loss for finite-difference checks.
Real total_loss(const Matrix& logits, const std::vector<int>& labels,
                Real alpha, bool balanced = true);

// Analytic d(total)/d(logits). The correct/incorrect partition and the
// gamma/beta weights are constants of the forward pass: they are step
// functions of the logits and carry no gradient.
Matrix grad_total_loss(const Matrix& logits, const std::vector<int>& labels,
                       Real alpha, bool balanced = true);

// Linear ramp: alpha_final * step / total_steps.
Real anneal_alpha(Index step, Index total_steps, Real alpha_final);

}  // namespace cpeal
