// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <vector>

#include "cpeal/types.hpp"

namespace cpeal {

// Fraction of exact prediction/label matches.
Real accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

struct EceBin {
  Index count = 0;
  Real mean_confidence = 0;
  Real mean_accuracy = 0;
};

// Top-label expected calibration error over equal-width confidence bins.
struct EceReport {
  int n_bins = 15;
  std::vector<EceBin> bins;
  Real ece = 0;
};

// Confidence is max_k p^(k); a sample lands in bin ceil(conf * n_bins)
// over (0, 1], with conf = 0 assigned to bin 1.
EceReport ece(const Matrix& probs, const std::vector<int>& labels,
              int n_bins = 15);

// One CSV row per bin: bin,count,mean_confidence,mean_accuracy.
void write_csv(const EceReport& report, std::ostream& out);

}  // namespace cpeal
