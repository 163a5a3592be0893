#include "fedcalib/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>

#include "fedcalib/kernels.hpp"

namespace fedcalib {

void validate(const PredictionSet& preds) {
  if (preds.size() == 0) throw std::invalid_argument("empty input");
  if (preds.probabilities.rows() != preds.labels.size())
    throw std::invalid_argument("probabilities/labels size mismatch");
  const int c = preds.num_classes();
  if (c < 2) throw std::invalid_argument("need at least 2 classes");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double total = 0.0;
    for (double p : preds.probabilities.row(i)) {
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("probability outside [0,1]");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-6)
      throw std::invalid_argument("row does not sum to 1");
    if (preds.labels[i] < 0 || preds.labels[i] >= c)
      throw std::invalid_argument("label outside [0, classes)");
  }
}

double classwise_ece(const PredictionSet& preds, BinPartition bins) {
  if (preds.size() == 0) throw std::invalid_argument("empty input");
  if (bins.num_bins < 1) throw std::invalid_argument("need at least 1 bin");
  const int c = preds.num_classes();
  const double n = static_cast<double>(preds.size());

  kernels::ClassBinStats stats;
  kernels::class_bin_stats(preds.probabilities, preds.labels, bins.num_bins,
                           stats);

  double total = 0.0;
  for (int j = 0; j < c; ++j) {
    for (int m = 0; m < bins.num_bins; ++m) {
      const std::size_t cell =
          static_cast<std::size_t>(j) * bins.num_bins + m;
      const auto cnt = stats.count[cell];
      if (cnt == 0) continue;
      const double mean_conf = stats.conf_sum[cell] / static_cast<double>(cnt);
      const double freq =
          static_cast<double>(stats.positives[cell]) / static_cast<double>(cnt);
      total += (static_cast<double>(cnt) / n) * std::fabs(mean_conf - freq);
    }
  }
  return total / static_cast<double>(c);
}

double top_label_ece(const PredictionSet& preds, BinPartition bins) {
  if (preds.size() == 0) throw std::invalid_argument("empty input");
  if (bins.num_bins < 1) throw std::invalid_argument("need at least 1 bin");
  const double n = static_cast<double>(preds.size());

  kernels::TopBinStats stats;
  kernels::top_bin_stats(preds.probabilities, preds.labels, bins.num_bins,
                         stats);

  double total = 0.0;
  for (int m = 0; m < bins.num_bins; ++m) {
    const auto cnt = stats.count[static_cast<std::size_t>(m)];
    if (cnt == 0) continue;
    const double mean_conf =
        stats.conf_sum[static_cast<std::size_t>(m)] / static_cast<double>(cnt);
    const double acc = static_cast<double>(stats.correct[static_cast<std::size_t>(m)]) /
                       static_cast<double>(cnt);
    total += (static_cast<double>(cnt) / n) * std::fabs(mean_conf - acc);
  }
  return total;
}

double accuracy(const PredictionSet& preds) {
  if (preds.size() == 0) throw std::invalid_argument("empty input");
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (kernels::argmax_row(preds.probabilities.row(i)) == preds.labels[i])
      ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double nll(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() == 0) throw std::invalid_argument("empty input");
  if (logits.rows() != labels.size())
    throw std::invalid_argument("logits/labels size mismatch");
  for (int label : labels)
    if (label < 0 || label >= static_cast<int>(logits.cols()))
      throw std::invalid_argument("label outside [0, classes)");
  for (double v : logits.data())
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit");

  std::vector<double> terms;
  kernels::nll_terms(logits, labels, terms);
  return kernels::blocked_sum(terms) / static_cast<double>(logits.rows());
}

std::vector<ReliabilityRow> reliability_table(const PredictionSet& preds,
                                              BinPartition bins) {
  if (preds.size() == 0) throw std::invalid_argument("empty input");
  const int c = preds.num_classes();

  kernels::ClassBinStats stats;
  kernels::class_bin_stats(preds.probabilities, preds.labels, bins.num_bins,
                           stats);

  std::vector<ReliabilityRow> rows;
  rows.reserve(static_cast<std::size_t>(c) * bins.num_bins);
  for (int j = 0; j < c; ++j) {
    for (int m = 0; m < bins.num_bins; ++m) {
      const std::size_t cell =
          static_cast<std::size_t>(j) * bins.num_bins + m;
      ReliabilityRow row;
      row.class_index = j;
      row.bin = m;
      row.count = stats.count[cell];
      if (row.count > 0) {
        row.mean_conf = stats.conf_sum[cell] / static_cast<double>(row.count);
        row.emp_freq = static_cast<double>(stats.positives[cell]) /
                       static_cast<double>(row.count);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_reliability_csv(std::ostream& os,
                           const std::vector<ReliabilityRow>& rows) {
  os << "class,bin,count,mean_conf,emp_freq\n";
  os.precision(9);
  for (const auto& r : rows) {
    os << r.class_index << ',' << r.bin << ',' << r.count << ','
       << r.mean_conf << ',' << r.emp_freq << '\n';
  }
}

}  // namespace fedcalib
