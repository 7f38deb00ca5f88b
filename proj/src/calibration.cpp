// SPDX-License-Identifier: Apache-2.0
#include "cpeal/calibration.hpp"

#include <cmath>

#include "cpeal/errors.hpp"
#include "cpeal/heads.hpp"

namespace cpeal {

namespace {

constexpr Real kSumTolerance = 1e-6;
constexpr Real kLogFloor = 1e-300;  // guards log(0) on degenerate inputs

void check_distribution(const auto& row) {
  if ((row.array() < 0).any())
    throw ValidationError("probability vector has a negative entry");
  const Real sum = row.sum();
  if (std::abs(sum - 1.0) > kSumTolerance)
    throw ValidationError("probability vector does not sum to 1");
}

Real entropy_unchecked(const auto& row) {
  Real h = 0;
  for (Index k = 0; k < row.size(); ++k) {
    const Real p = row(k);
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

void check_labels(const std::vector<int>& labels, Index m, Index k) {
  if (static_cast<Index>(labels.size()) != m)
    throw ValidationError("labels length does not match batch size");
  for (int y : labels)
    if (y < 0 || y >= k) throw ValidationError("label out of range");
}

struct BatchParts {
  std::vector<Index> incorrect;
  std::vector<Index> correct;
  Vector h;  // per-sample entropy
  Real li = 0;
  Real lc = 0;
  Real gamma = 0;
  Real beta = 0;
};

BatchParts calib_parts(const Matrix& probs, const std::vector<int>& labels,
                       bool balanced) {
  BatchParts parts;
  std::tie(parts.incorrect, parts.correct) =
      partition(argmax_rows(probs), labels);
  parts.h.resize(probs.rows());
  for (Index r = 0; r < probs.rows(); ++r)
    parts.h(r) = entropy_unchecked(probs.row(r));

  for (Index i : parts.incorrect)
    parts.li += -std::log(std::tanh(parts.h(i)) + kCalibEpsilon);
  for (Index j : parts.correct)
    parts.lc += -std::log(1.0 - std::tanh(parts.h(j)) + kCalibEpsilon);
  if (!parts.incorrect.empty()) parts.li /= static_cast<Real>(parts.incorrect.size());
  if (!parts.correct.empty()) parts.lc /= static_cast<Real>(parts.correct.size());

  if (balanced) {
    const Real n = static_cast<Real>(parts.incorrect.size() + parts.correct.size());
    parts.gamma = static_cast<Real>(parts.incorrect.size()) / n;
    parts.beta = static_cast<Real>(parts.correct.size()) / n;
  } else {
    parts.gamma = 0.5;
    parts.beta = 0.5;
  }
  return parts;
}

}  // namespace

Real entropy(const Vector& p) {
  check_distribution(p);
  return entropy_unchecked(p);
}

Vector entropy_rows(const Matrix& probs) {
  Vector h(probs.rows());
  for (Index r = 0; r < probs.rows(); ++r) {
    check_distribution(probs.row(r));
    h(r) = entropy_unchecked(probs.row(r));
  }
  return h;
}

std::pair<std::vector<Index>, std::vector<Index>> partition(
    const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw ValidationError("partition inputs differ in length");
  std::vector<Index> incorrect, correct;
  for (std::size_t i = 0; i < preds.size(); ++i)
    (preds[i] == labels[i] ? correct : incorrect)
        .push_back(static_cast<Index>(i));
  return {std::move(incorrect), std::move(correct)};
}

CalibBatchLoss calib_loss(const Matrix& probs, const std::vector<int>& labels,
                          Real alpha, bool balanced) {
  if (probs.rows() == 0) throw ValidationError("empty batch");
  for (Index r = 0; r < probs.rows(); ++r) check_distribution(probs.row(r));
  check_labels(labels, probs.rows(), probs.cols());

  const BatchParts parts = calib_parts(probs, labels, balanced);

  CalibBatchLoss out;
  out.alpha = alpha;
  out.n_incorrect = static_cast<Index>(parts.incorrect.size());
  out.n_correct = static_cast<Index>(parts.correct.size());
  out.incorrect_loss = parts.li;
  out.correct_loss = parts.lc;
  out.gamma_correct = parts.gamma;
  out.beta_incorrect = parts.beta;
  out.calib = parts.gamma * parts.lc + parts.beta * parts.li;
  Real ce = 0;
  for (Index r = 0; r < probs.rows(); ++r)
    ce -= std::log(std::max(probs(r, labels[static_cast<std::size_t>(r)]),
                            kLogFloor));
  out.ce = ce / static_cast<Real>(probs.rows());
  out.total = out.ce + alpha * out.calib;
  return out;
}

Real total_loss(const Matrix& logits, const std::vector<int>& labels,
                Real alpha, bool balanced) {
  if (logits.rows() == 0) throw ValidationError("empty batch");
  if (!logits.allFinite()) throw ValidationError("logits contain NaN or Inf");
  check_labels(labels, logits.rows(), logits.cols());

  // Cross entropy from logits directly: log-sum-exp minus the true logit.
  Real ce = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    const Real max = logits.row(r).maxCoeff();
    const Real lse = max + std::log((logits.row(r).array() - max).exp().sum());
    ce += lse - logits(r, labels[static_cast<std::size_t>(r)]);
  }
  ce /= static_cast<Real>(logits.rows());

  const BatchParts parts =
      calib_parts(softmax_rows(logits), labels, balanced);
  return ce + alpha * (parts.gamma * parts.lc + parts.beta * parts.li);
}

Matrix grad_total_loss(const Matrix& logits, const std::vector<int>& labels,
                       Real alpha, bool balanced) {
  if (logits.rows() == 0) throw ValidationError("empty batch");
  if (!logits.allFinite()) throw ValidationError("logits contain NaN or Inf");
  check_labels(labels, logits.rows(), logits.cols());

  const Matrix probs = softmax_rows(logits);
  const Index m = logits.rows();
  const BatchParts parts = calib_parts(probs, labels, balanced);

  // Cross-entropy part: (p - onehot(y)) / m.
  Matrix grad = probs / static_cast<Real>(m);
  for (Index r = 0; r < m; ++r)
    grad(r, labels[static_cast<std::size_t>(r)]) -= 1.0 / static_cast<Real>(m);

  if (alpha == 0) return grad;

  // Calibration part, chained through H: dH/dz_k = -p_k (log p_k + H),
  // with the p_k = 0 limit taken as 0.
  Vector coeff = Vector::Zero(m);
  for (Index i : parts.incorrect) {
    const Real t = std::tanh(parts.h(i));
    const Real dli = -(1.0 - t * t) / (t + kCalibEpsilon);
    coeff(i) = alpha * parts.beta * dli /
               static_cast<Real>(parts.incorrect.size());
  }
  for (Index j : parts.correct) {
    const Real t = std::tanh(parts.h(j));
    const Real dlc = (1.0 - t * t) / (1.0 - t + kCalibEpsilon);
    coeff(j) = alpha * parts.gamma * dlc /
               static_cast<Real>(parts.correct.size());
  }
  for (Index r = 0; r < m; ++r) {
    if (coeff(r) == 0) continue;
    for (Index k = 0; k < logits.cols(); ++k) {
      const Real p = probs(r, k);
      if (p > 0) grad(r, k) += coeff(r) * (-p * (std::log(p) + parts.h(r)));
    }
  }
  return grad;
}

Real anneal_alpha(Index step, Index total_steps, Real alpha_final) {
  if (total_steps < 1) throw ValidationError("total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw ValidationError("step outside [0, total_steps]");
  if (alpha_final < 0) throw ValidationError("alpha_final must be >= 0");
  return alpha_final * static_cast<Real>(step) / static_cast<Real>(total_steps);
}

}  // namespace cpeal
