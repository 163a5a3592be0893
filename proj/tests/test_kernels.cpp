#include <doctest.h>

#include "fedcalib/kernels.hpp"
#include "fedcalib/matrix.hpp"
#include "fedcalib/rng.hpp"

using namespace fedcalib;

namespace {

Matrix random_logits(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = 3.0 * rng.normal();
  return m;
}

std::vector<int> random_labels(std::size_t rows, int classes,
                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> labels(rows);
  for (auto& l : labels)
    l = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(classes));
  return labels;
}

}  // namespace

TEST_CASE("bin_index boundary handling") {
  // Decimal boundaries land in the upper bin even when p * bins rounds down.
  CHECK(kernels::bin_index(0.7, 10) == 7);
  CHECK(kernels::bin_index(0.3, 10) == 3);
  CHECK(kernels::bin_index(0.1, 15) == 1);
  CHECK(kernels::bin_index(0.0, 10) == 0);
  CHECK(kernels::bin_index(1.0, 10) == 9);
  CHECK(kernels::bin_index(0.999999, 10) == 9);
  CHECK(kernels::bin_index(0.05, 10) == 0);

  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double p = rng.uniform();
    for (int bins : {2, 10, 15, 128}) {
      const int idx = kernels::bin_index(p, bins);
      REQUIRE(idx >= 0);
      REQUIRE(idx < bins);
      CHECK(p >= static_cast<double>(idx) / bins);
      if (idx + 1 < bins) CHECK(p < static_cast<double>(idx + 1) / bins);
    }
  }
}

TEST_CASE("argmax ties break to the lowest index") {
  const std::vector<double> tied{0.4, 0.4, 0.2};
  CHECK(kernels::argmax_row(tied) == 0);
  const std::vector<double> plain{0.1, 0.2, 0.7};
  CHECK(kernels::argmax_row(plain) == 2);
}

TEST_CASE("openmp kernels match the serial reference bit for bit") {
  const auto logits = random_logits(4097, 7, 11);
  const auto labels = random_labels(4097, 7, 12);

  Matrix probs_serial;
  Matrix probs_omp;
  kernels::serial::softmax_rows(logits, probs_serial);
  kernels::omp::softmax_rows(logits, probs_omp);
  CHECK(probs_serial == probs_omp);

  std::vector<double> terms_serial;
  std::vector<double> terms_omp;
  kernels::serial::nll_terms(logits, labels, terms_serial);
  kernels::omp::nll_terms(logits, labels, terms_omp);
  CHECK(terms_serial == terms_omp);

  kernels::ClassBinStats cls_serial;
  kernels::ClassBinStats cls_omp;
  kernels::serial::class_bin_stats(probs_serial, labels, 15, cls_serial);
  kernels::omp::class_bin_stats(probs_serial, labels, 15, cls_omp);
  CHECK(cls_serial.count == cls_omp.count);
  CHECK(cls_serial.conf_sum == cls_omp.conf_sum);
  CHECK(cls_serial.positives == cls_omp.positives);

  kernels::TopBinStats top_serial;
  kernels::TopBinStats top_omp;
  kernels::serial::top_bin_stats(probs_serial, labels, 15, top_serial);
  kernels::omp::top_bin_stats(probs_serial, labels, 15, top_omp);
  CHECK(top_serial.count == top_omp.count);
  CHECK(top_serial.conf_sum == top_omp.conf_sum);
  CHECK(top_serial.correct == top_omp.correct);

  CHECK(kernels::serial::blocked_sum(terms_serial) ==
        kernels::omp::blocked_sum(terms_serial));
}

TEST_CASE("dispatch honors the parallel switch") {
  const auto logits = random_logits(257, 3, 4);
  Matrix a;
  Matrix b;
  kernels::set_parallel_enabled(false);
  kernels::softmax_rows(logits, a);
  kernels::set_parallel_enabled(true);
  kernels::softmax_rows(logits, b);
  CHECK(a == b);
}
