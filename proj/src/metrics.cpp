// SPDX-License-Identifier: Apache-2.0
#include "cpeal/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cpeal/errors.hpp"
#include "cpeal/heads.hpp"

namespace cpeal {

Real accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty()) throw ValidationError("accuracy of an empty batch");
  if (preds.size() != labels.size())
    throw ValidationError("accuracy inputs differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<Real>(hits) / static_cast<Real>(preds.size());
}

EceReport ece(const Matrix& probs, const std::vector<int>& labels, int n_bins) {
  if (n_bins <= 0) throw ValidationError("n_bins must be positive");
  if (probs.rows() == 0) throw ValidationError("ece of an empty batch");
  if (static_cast<Index>(labels.size()) != probs.rows())
    throw ValidationError("ece inputs differ in length");

  const std::vector<int> preds = argmax_rows(probs);
  EceReport report;
  report.n_bins = n_bins;
  report.bins.assign(static_cast<std::size_t>(n_bins), EceBin{});
  std::vector<Real> conf_sum(static_cast<std::size_t>(n_bins), 0);
  std::vector<Real> acc_sum(static_cast<std::size_t>(n_bins), 0);

  for (Index r = 0; r < probs.rows(); ++r) {
    const Real conf = probs.row(r).maxCoeff();
    int bin = static_cast<int>(std::ceil(conf * n_bins));
    bin = std::clamp(bin, 1, n_bins);
    const auto b = static_cast<std::size_t>(bin - 1);
    report.bins[b].count += 1;
    conf_sum[b] += conf;
    acc_sum[b] += preds[static_cast<std::size_t>(r)] ==
                  labels[static_cast<std::size_t>(r)];
  }

  const Real n = static_cast<Real>(probs.rows());
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    auto& bin = report.bins[b];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[b] / static_cast<Real>(bin.count);
    bin.mean_accuracy = acc_sum[b] / static_cast<Real>(bin.count);
    report.ece += (static_cast<Real>(bin.count) / n) *
                  std::abs(bin.mean_accuracy - bin.mean_confidence);
  }
  return report;
}

void write_csv(const EceReport& report, std::ostream& out) {
  out << "bin,count,mean_confidence,mean_accuracy\n";
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    const auto& bin = report.bins[b];
    out << b + 1 << ',' << bin.count << ',' << bin.mean_confidence << ','
        << bin.mean_accuracy << '\n';
  }
}

}  // namespace cpeal
