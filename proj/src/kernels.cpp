#include "fedcalib/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

namespace fedcalib::kernels {

namespace {

constexpr std::int64_t kSumBlock = 4096;

std::atomic<bool> g_parallel{true};

void softmax_row(std::span<const double> z, std::span<double> out) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    out[j] = std::exp(z[j] - m);
    total += out[j];
  }
  for (auto& v : out) v /= total;
}

double nll_term_row(std::span<const double> z, int label) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double total = 0.0;
  for (double v : z) total += std::exp(v - m);
  return m + std::log(total) - z[static_cast<std::size_t>(label)];
}

}  // namespace

int argmax_row(std::span<const double> row) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(row.size()); ++j) {
    if (row[static_cast<std::size_t>(j)] > row[static_cast<std::size_t>(best)])
      best = j;  // ties keep the lowest index
  }
  return best;
}

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool enabled) {
  g_parallel.store(enabled, std::memory_order_relaxed);
}

namespace serial {

void softmax_rows(const Matrix& logits, Matrix& out) {
  out.resize(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i)
    softmax_row(logits.row(i), out.row(i));
}

void nll_terms(const Matrix& logits, const std::vector<int>& labels,
               std::vector<double>& out) {
  out.assign(logits.rows(), 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i)
    out[i] = nll_term_row(logits.row(i), labels[i]);
}

void class_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                     int bins, ClassBinStats& out) {
  const int c = static_cast<int>(probs.cols());
  out.reset(c, bins);
  for (int j = 0; j < c; ++j) {
    const std::size_t base = static_cast<std::size_t>(j) * bins;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      const double p = probs(i, static_cast<std::size_t>(j));
      const std::size_t cell = base + static_cast<std::size_t>(bin_index(p, bins));
      out.count[cell] += 1;
      out.conf_sum[cell] += p;
      out.positives[cell] += labels[i] == j ? 1 : 0;
    }
  }
}

void top_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                   int bins, TopBinStats& out) {
  out.reset(bins);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    const int pred = argmax_row(row);
    const double conf = row[static_cast<std::size_t>(pred)];
    const std::size_t cell = static_cast<std::size_t>(bin_index(conf, bins));
    out.count[cell] += 1;
    out.conf_sum[cell] += conf;
    out.correct[cell] += labels[i] == pred ? 1 : 0;
  }
}

double blocked_sum(std::span<const double> values) {
  const std::int64_t n = static_cast<std::int64_t>(values.size());
  const std::int64_t blocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
  for (std::int64_t b = 0; b < blocks; ++b) {
    const std::int64_t hi = std::min(n, (b + 1) * kSumBlock);
    double acc = 0.0;
    for (std::int64_t i = b * kSumBlock; i < hi; ++i)
      acc += values[static_cast<std::size_t>(i)];
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace serial

namespace omp {

void softmax_rows(const Matrix& logits, Matrix& out) {
  out.resize(logits.rows(), logits.cols());
  const std::int64_t n = static_cast<std::int64_t>(logits.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    softmax_row(logits.row(idx), out.row(idx));
  }
}

void nll_terms(const Matrix& logits, const std::vector<int>& labels,
               std::vector<double>& out) {
  out.assign(logits.rows(), 0.0);
  const std::int64_t n = static_cast<std::int64_t>(logits.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = nll_term_row(logits.row(idx), labels[idx]);
  }
}

void class_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                     int bins, ClassBinStats& out) {
  const int c = static_cast<int>(probs.cols());
  out.reset(c, bins);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < c; ++j) {
    const std::size_t base = static_cast<std::size_t>(j) * bins;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      const double p = probs(i, static_cast<std::size_t>(j));
      const std::size_t cell = base + static_cast<std::size_t>(bin_index(p, bins));
      out.count[cell] += 1;
      out.conf_sum[cell] += p;
      out.positives[cell] += labels[i] == j ? 1 : 0;
    }
  }
}

void top_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                   int bins, TopBinStats& out) {
  out.reset(bins);
  const std::int64_t n = static_cast<std::int64_t>(probs.rows());
  std::vector<int> bin_of(probs.rows(), 0);
  std::vector<int> pred_of(probs.rows(), 0);
  std::vector<double> conf_of(probs.rows(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto row = probs.row(idx);
    const int pred = argmax_row(row);
    pred_of[idx] = pred;
    conf_of[idx] = row[static_cast<std::size_t>(pred)];
    bin_of[idx] = bin_index(conf_of[idx], bins);
  }
  // Cheap sequential accumulation in sample order keeps every cell
  // bit-identical to the serial pass.
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto cell = static_cast<std::size_t>(bin_of[i]);
    out.count[cell] += 1;
    out.conf_sum[cell] += conf_of[i];
    out.correct[cell] += labels[i] == pred_of[i] ? 1 : 0;
  }
}

double blocked_sum(std::span<const double> values) {
  const std::int64_t n = static_cast<std::int64_t>(values.size());
  const std::int64_t blocks = (n + kSumBlock - 1) / kSumBlock;
  std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < blocks; ++b) {
    const std::int64_t hi = std::min(n, (b + 1) * kSumBlock);
    double acc = 0.0;
    for (std::int64_t i = b * kSumBlock; i < hi; ++i)
      acc += values[static_cast<std::size_t>(i)];
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace omp

void softmax_rows(const Matrix& logits, Matrix& out) {
  parallel_enabled() ? omp::softmax_rows(logits, out)
                     : serial::softmax_rows(logits, out);
}

void nll_terms(const Matrix& logits, const std::vector<int>& labels,
               std::vector<double>& out) {
  parallel_enabled() ? omp::nll_terms(logits, labels, out)
                     : serial::nll_terms(logits, labels, out);
}

void class_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                     int bins, ClassBinStats& out) {
  parallel_enabled() ? omp::class_bin_stats(probs, labels, bins, out)
                     : serial::class_bin_stats(probs, labels, bins, out);
}

void top_bin_stats(const Matrix& probs, const std::vector<int>& labels,
                   int bins, TopBinStats& out) {
  parallel_enabled() ? omp::top_bin_stats(probs, labels, bins, out)
                     : serial::top_bin_stats(probs, labels, bins, out);
}

double blocked_sum(std::span<const double> values) {
  return parallel_enabled() ? omp::blocked_sum(values)
                            : serial::blocked_sum(values);
}

}  // namespace fedcalib::kernels
