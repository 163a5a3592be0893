#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedcalib/data.hpp"
#include "fedcalib/federation.hpp"
#include "fedcalib/privacy.hpp"

namespace fedcalib {

// One experiment: data source, partitioning, calibrator choice, round
// schedule, optional privacy, repeat count. All randomness derives from
// `seed` (repeat r uses seed + r).
struct ExperimentConfig {
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::string> logits_file;

  std::optional<PartitionSpec> partition;
  SplitFractions splits;

  // identity | fedtemp | fedvector | fedmatrix | fedopvector | fedbin | fedbbq
  std::string kind = "fedtemp";
  int bin_exponent = 7;
  WeightMode weighting = WeightMode::None;

  int total_rounds = 1;
  double participation = 1.0;
  double server_lr = 1.0;

  std::optional<PrivacyBudget> privacy;
  std::optional<double> clip_scaling;
  std::optional<double> clip_pos;
  std::optional<double> clip_neg;

  int eval_bins = 15;
  int repeats = 5;
  std::uint64_t seed = 0;
  // Global metrics are always reported; this adds a per-client breakdown on
  // each client's own test split.
  bool per_client_metrics = false;

  std::string method_name() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_text(const ExperimentConfig& cfg);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;
};

struct ClientMetrics {
  int client_id = 0;
  std::size_t test_count = 0;
  double cwece = 0.0;
  double accuracy = 0.0;
};

struct RepeatResult {
  double base_cwece = 0.0;
  double base_ece = 0.0;
  double base_accuracy = 0.0;
  double cwece = 0.0;
  double ece = 0.0;
  double accuracy = 0.0;
  bool accuracy_drop = false;
  std::vector<RoundReport> rounds;
  std::vector<ClientMetrics> per_client;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string method;
  std::vector<RepeatResult> repeats;
  MetricSummary cwece;
  MetricSummary ece;
  MetricSummary accuracy;
  MetricSummary base_cwece;
  MetricSummary base_accuracy;
  bool accuracy_drop_flag = false;
  std::optional<PrivacyPlan> plan;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// Deterministic serializations; no timestamps (those live in meta.json).
std::string report_to_json_text(const ExperimentReport& report);
std::string rounds_to_jsonl(const ExperimentReport& report);
std::string summary_csv(const ExperimentReport& report);

// Writes report.json, rounds.jsonl, summary.csv and a meta.json sidecar into
// the directory (created if missing).
void emit_report(const ExperimentReport& report, const std::string& out_dir);

enum class SweepAxis { Rounds, Beta, Epsilon };

SweepAxis sweep_axis_from_name(const std::string& name);

struct SweepResult {
  std::vector<double> values;
  std::vector<ExperimentReport> reports;
};

SweepResult sweep(const ExperimentConfig& cfg, SweepAxis axis,
                  const std::vector<double>& values);

// Combined CSV: axis_value,method,cwece_mean,cwece_std,acc_mean,acc_std.
std::string sweep_csv(const SweepResult& result, SweepAxis axis);

void emit_sweep(const SweepResult& result, SweepAxis axis,
                const std::string& out_dir);

}  // namespace fedcalib
