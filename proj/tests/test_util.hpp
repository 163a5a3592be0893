#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedcalib/data.hpp"
#include "fedcalib/matrix.hpp"

namespace fedcalib::testutil {

inline Matrix records_to_logits(const std::vector<LogitRecord>& records) {
  Matrix m(records.size(), records.empty() ? 0 : records[0].logits.size());
  for (std::size_t i = 0; i < records.size(); ++i)
    std::copy(records[i].logits.begin(), records[i].logits.end(),
              m.row(i).begin());
  return m;
}

inline std::vector<int> records_to_labels(
    const std::vector<LogitRecord>& records) {
  std::vector<int> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) labels[i] = records[i].label;
  return labels;
}

// Written independently of the library's NLL path: plain serial
// log-sum-exp accumulation.
inline double nll_at_temperature(const Matrix& logits,
                                 const std::vector<int>& labels, double t) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    double m = row[0] / t;
    for (double z : row) m = std::max(m, z / t);
    double sum = 0.0;
    for (double z : row) sum += std::exp(z / t - m);
    total += m + std::log(sum) - row[static_cast<std::size_t>(labels[i])] / t;
  }
  return total / static_cast<double>(logits.rows());
}

// Grid-search oracle for the best temperature on a dataset.
inline double grid_search_temperature(const Matrix& logits,
                                      const std::vector<int>& labels,
                                      double step = 0.01, double lo = 0.05,
                                      double hi = 20.0) {
  double best_t = lo;
  double best = nll_at_temperature(logits, labels, lo);
  for (double t = lo + step; t <= hi + 1e-12; t += step) {
    const double value = nll_at_temperature(logits, labels, t);
    if (value < best) {
      best = value;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace fedcalib::testutil
