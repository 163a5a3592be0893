#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedcalib/calibrators.hpp"
#include "fedcalib/data.hpp"
#include "fedcalib/federation.hpp"
#include "fedcalib/kernels.hpp"
#include "fedcalib/metrics.hpp"

using namespace fedcalib;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         reps;
}

void report(const std::string& name, double serial_ms, double parallel_ms) {
  std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(), serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
  const int n = 200000;
  const int classes = 10;
  const int reps = 5;

  SyntheticSpec spec;
  spec.num_classes = classes;
  spec.num_samples = n;
  spec.seed = 7;
  const auto records = synthetic_miscalibrated_generate(spec);

  Matrix logits(static_cast<std::size_t>(n), static_cast<std::size_t>(classes));
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::copy(records[static_cast<std::size_t>(i)].logits.begin(),
              records[static_cast<std::size_t>(i)].logits.end(),
              logits.row(static_cast<std::size_t>(i)).begin());
    labels[static_cast<std::size_t>(i)] =
        records[static_cast<std::size_t>(i)].label;
  }

#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run serial code\n");
#endif
  std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

  Matrix probs;
  report("softmax_rows",
         time_ms([&] { kernels::serial::softmax_rows(logits, probs); }, reps),
         time_ms([&] { kernels::omp::softmax_rows(logits, probs); }, reps));
  kernels::omp::softmax_rows(logits, probs);

  std::vector<double> terms;
  report("nll_terms",
         time_ms([&] { kernels::serial::nll_terms(logits, labels, terms); },
                 reps),
         time_ms([&] { kernels::omp::nll_terms(logits, labels, terms); },
                 reps));

  kernels::ClassBinStats class_stats;
  report(
      "class_bin_stats",
      time_ms([&] { kernels::serial::class_bin_stats(probs, labels, 15,
                                                     class_stats); },
              reps),
      time_ms(
          [&] { kernels::omp::class_bin_stats(probs, labels, 15, class_stats); },
          reps));

  kernels::TopBinStats top_stats;
  report(
      "top_bin_stats",
      time_ms([&] { kernels::serial::top_bin_stats(probs, labels, 15,
                                                   top_stats); },
              reps),
      time_ms([&] { kernels::omp::top_bin_stats(probs, labels, 15, top_stats); },
              reps));

  report("blocked_sum",
         time_ms([&] { kernels::serial::blocked_sum(terms); }, reps),
         time_ms([&] { kernels::omp::blocked_sum(terms); }, reps));

  // End-to-end federated round, parallel clients vs serial clients.
  PartitionSpec part{0.1, 50, 7};
  auto clients = dirichlet_label_skew_partition(records, part);
  for (auto& client : clients) split_local(client, {}, 7);

  RoundConfig cfg;
  cfg.total_rounds = 3;
  cfg.participation = 1.0;
  cfg.seed = 7;

  FedBinningOptions binning;
  const double fed_serial = time_ms(
      [&] {
        kernels::set_parallel_enabled(false);
        run_fed_binning(clients, binning, cfg);
      },
      1);
  const double fed_parallel = time_ms(
      [&] {
        kernels::set_parallel_enabled(true);
        run_fed_binning(clients, binning, cfg);
      },
      1);
  report("run_fed_binning (3 rounds)", fed_serial, fed_parallel);

  FedScalingOptions scaling;
  const double scale_serial = time_ms(
      [&] {
        kernels::set_parallel_enabled(false);
        run_fed_scaling(clients, scaling, cfg);
      },
      1);
  const double scale_parallel = time_ms(
      [&] {
        kernels::set_parallel_enabled(true);
        run_fed_scaling(clients, scaling, cfg);
      },
      1);
  report("run_fed_scaling (3 rounds)", scale_serial, scale_parallel);
  kernels::set_parallel_enabled(true);
  return 0;
}
