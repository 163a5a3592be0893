#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fedcalib/matrix.hpp"

namespace fedcalib {

// A batch of per-class confidences with ground-truth labels. Rows of
// `probabilities` are distributions over the classes.
struct PredictionSet {
  Matrix probabilities;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  int num_classes() const { return static_cast<int>(probabilities.cols()); }
};

// Throws std::invalid_argument when rows do not sum to 1 (tolerance 1e-6),
// entries leave [0,1], or labels fall outside [0, c).
void validate(const PredictionSet& preds);

// Fixed-width evaluation bins over [0,1]. Bin m covers [(m-1)/M, m/M) with
// the last bin closed at 1.0. 15 bins is the reporting default.
struct BinPartition {
  int num_bins = 15;
};

double classwise_ece(const PredictionSet& preds, BinPartition bins = {});
double top_label_ece(const PredictionSet& preds, BinPartition bins = {});

// Fraction of rows whose argmax (ties to the lowest class index) matches the
// label.
double accuracy(const PredictionSet& preds);

// Mean negative log softmax probability of the true class, stabilized by
// max-subtraction. Throws on non-finite logits.
double nll(const Matrix& logits, const std::vector<int>& labels);

struct ReliabilityRow {
  int class_index = 0;
  int bin = 0;
  std::int64_t count = 0;
  double mean_conf = 0.0;
  double emp_freq = 0.0;
};

// One row per (class, bin), in that order; empty bins appear with count 0.
std::vector<ReliabilityRow> reliability_table(const PredictionSet& preds,
                                              BinPartition bins = {});

// CSV with header `class,bin,count,mean_conf,emp_freq`.
void write_reliability_csv(std::ostream& os,
                           const std::vector<ReliabilityRow>& rows);

}  // namespace fedcalib
