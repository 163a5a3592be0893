#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedcalib/matrix.hpp"

namespace fedcalib::kernels {

// Half-open fixed-width bins [(m-1)/M, m/M) with the last bin closed at 1.0.
// The comparison against the recomputed edge keeps decimal confidences like
// 0.7 in the bin that contains them mathematically, not where the rounded
// product p*bins happens to land.
inline int bin_index(double p, int bins) {
  if (p <= 0.0) return 0;
  if (p >= 1.0) return bins - 1;
  int idx = static_cast<int>(p * static_cast<double>(bins));
  if (idx >= bins) idx = bins - 1;
  if (idx + 1 < bins &&
      p >= static_cast<double>(idx + 1) / static_cast<double>(bins)) {
    ++idx;
  } else if (idx > 0 &&
             p < static_cast<double>(idx) / static_cast<double>(bins)) {
    --idx;
  }
  return idx;
}

// Per (class, bin) tallies over a prediction set: sample count, summed
// confidence and positive-label count. Flattened as class * bins + bin.
struct ClassBinStats {
  int classes = 0;
  int bins = 0;
  std::vector<std::int64_t> count;
  std::vector<double> conf_sum;
  std::vector<std::int64_t> positives;

  void reset(int c, int b) {
    classes = c;
    bins = b;
    count.assign(static_cast<std::size_t>(c) * b, 0);
    conf_sum.assign(static_cast<std::size_t>(c) * b, 0.0);
    positives.assign(static_cast<std::size_t>(c) * b, 0);
  }
};

// Per-bin tallies keyed by each sample's top confidence.
struct TopBinStats {
  int bins = 0;
  std::vector<std::int64_t> count;
  std::vector<double> conf_sum;
  std::vector<std::int64_t> correct;

  void reset(int b) {
    bins = b;
    count.assign(static_cast<std::size_t>(b), 0);
    conf_sum.assign(static_cast<std::size_t>(b), 0.0);
    correct.assign(static_cast<std::size_t>(b), 0);
  }
};

// Serial reference implementations. These stay the plain textbook loops and
// are what the OpenMP kernels are tested against (bit-identical outputs) and
// benchmarked against.
namespace serial {

void softmax_rows(const Matrix& logits, Matrix& out);
void nll_terms(const Matrix& logits, const std::vector<int>& labels,
               std::vector<double>& out);
void class_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                     int bins, ClassBinStats& out);
void top_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                   int bins, TopBinStats& out);
double blocked_sum(std::span<const double> values);

}  // namespace serial

// OpenMP implementations. Parallelism is arranged so every accumulation cell
// is filled in the same order as the serial reference: rows, classes, bins
// and fixed-width sum blocks are independent work items, so results are
// bit-identical to serial:: regardless of thread count.
namespace omp {

void softmax_rows(const Matrix& logits, Matrix& out);
void nll_terms(const Matrix& logits, const std::vector<int>& labels,
               std::vector<double>& out);
void class_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                     int bins, ClassBinStats& out);
void top_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                   int bins, TopBinStats& out);
double blocked_sum(std::span<const double> values);

}  // namespace omp

bool parallel_enabled();
void set_parallel_enabled(bool enabled);

// Dispatching entry points used by the library.
void softmax_rows(const Matrix& logits, Matrix& out);
void nll_terms(const Matrix& logits, const std::vector<int>& labels,
               std::vector<double>& out);
void class_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                     int bins, ClassBinStats& out);
void top_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                   int bins, TopBinStats& out);
double blocked_sum(std::span<const double> values);

int argmax_row(std::span<const double> row);

}  // namespace fedcalib::kernels
