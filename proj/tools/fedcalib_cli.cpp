#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedcalib/calibrators.hpp"
#include "fedcalib/data.hpp"
#include "fedcalib/harness.hpp"
#include "fedcalib/metrics.hpp"
#include "fedcalib/privacy.hpp"

namespace {

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(std::stod(field));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated post-hoc calibration simulator"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand(
      "generate", "Generate synthetic miscalibrated logits as CSV");
  int gen_classes = 10;
  int gen_samples = 10000;
  double gen_true_temp = 3.0;
  double gen_separation = 2.0;
  std::uint64_t gen_seed = 0;
  std::string gen_weights;
  std::string gen_out;
  generate->add_option("--classes", gen_classes, "Number of classes");
  generate->add_option("--samples", gen_samples, "Number of samples");
  generate->add_option("--true-temp", gen_true_temp,
                       "Temperature that exactly recalibrates the output");
  generate->add_option("--separation", gen_separation,
                       "Gap between class mean logits");
  generate->add_option("--seed", gen_seed, "RNG seed");
  generate->add_option("--class-weights", gen_weights,
                       "Comma-separated mixture weights");
  generate->add_option("--out", gen_out, "Output CSV (.gz supported)")
      ->required();

  // partition
  auto* partition = app.add_subcommand(
      "partition", "Apply Dirichlet label-skew partitioning and local splits");
  std::string part_in;
  std::string part_out;
  double part_beta = 0.1;
  int part_clients = 100;
  std::uint64_t part_seed = 0;
  double part_train = 0.8;
  double part_cal = 0.1;
  double part_test = 0.1;
  partition->add_option("--in", part_in, "Input logits CSV")->required();
  partition->add_option("--out", part_out, "Output CSV with client_id,split")
      ->required();
  partition->add_option("--beta", part_beta, "Dirichlet concentration");
  partition->add_option("--clients", part_clients, "Client count");
  partition->add_option("--seed", part_seed, "RNG seed");
  partition->add_option("--train", part_train, "Train fraction");
  partition->add_option("--cal", part_cal, "Calibration fraction");
  partition->add_option("--test", part_test, "Test fraction");

  // calibrate
  auto* calibrate =
      app.add_subcommand("calibrate", "Run one federated calibration experiment");
  std::string cal_config;
  std::string cal_out;
  std::int64_t cal_seed = -1;
  int cal_repeats = -1;
  calibrate->add_option("--config", cal_config, "Experiment config JSON")
      ->required();
  calibrate->add_option("--out", cal_out, "Output directory")->required();
  calibrate->add_option("--seed", cal_seed, "Override base seed");
  calibrate->add_option("--repeats", cal_repeats, "Override repeat count");
  bool cal_per_client = false;
  calibrate->add_flag("--per-client", cal_per_client,
                      "Add per-client metric breakdowns to the report");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep T, beta or epsilon");
  std::string sweep_config;
  std::string sweep_axis;
  std::string sweep_values;
  std::string sweep_out;
  sweep_cmd->add_option("--config", sweep_config, "Experiment config JSON")
      ->required();
  sweep_cmd->add_option("--axis", sweep_axis, "T | beta | epsilon")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")
      ->required();
  sweep_cmd->add_option("--out", sweep_out, "Output directory")->required();

  // dp-plan
  auto* dp_plan = app.add_subcommand("dp-plan",
                                     "Print the privacy plan for a budget");
  std::string plan_mode = "scaling";
  double plan_epsilon = 1.0;
  double plan_delta = 1e-5;
  int plan_rounds = 12;
  int plan_classes = 10;
  double plan_clip = 0.5;
  double plan_clip_pos = 10.0;
  double plan_clip_neg = 50.0;
  dp_plan->add_option("--mode", plan_mode, "scaling | binning");
  dp_plan->add_option("--epsilon", plan_epsilon, "Privacy budget epsilon");
  dp_plan->add_option("--delta", plan_delta, "Privacy budget delta");
  dp_plan->add_option("--rounds", plan_rounds, "Calibration rounds T");
  dp_plan->add_option("--classes", plan_classes, "Class count");
  dp_plan->add_option("--clip", plan_clip, "Scaling clip norm");
  dp_plan->add_option("--clip-pos", plan_clip_pos,
                      "Positive histogram clip norm");
  dp_plan->add_option("--clip-neg", plan_clip_neg,
                      "Negative histogram clip norm");

  // eval
  auto* eval_cmd =
      app.add_subcommand("eval", "Compute metrics for a logits file");
  std::string eval_in;
  int eval_bins = 15;
  std::string eval_calibrator;
  std::string eval_reliability;
  eval_cmd->add_option("--in", eval_in, "Logits CSV")->required();
  eval_cmd->add_option("--bins", eval_bins, "Evaluation bin count");
  eval_cmd->add_option("--calibrator", eval_calibrator,
                       "Apply a saved calibrator document before scoring");
  eval_cmd->add_option("--reliability", eval_reliability,
                       "Write the reliability table CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      fedcalib::SyntheticSpec spec;
      spec.num_classes = gen_classes;
      spec.num_samples = gen_samples;
      spec.true_temp = gen_true_temp;
      spec.separation = gen_separation;
      spec.seed = gen_seed;
      if (!gen_weights.empty()) spec.class_weights = parse_double_list(gen_weights);
      const auto records = fedcalib::synthetic_miscalibrated_generate(spec);
      fedcalib::export_logits_file(records, gen_out);
      std::cout << "wrote " << records.size() << " records to " << gen_out
                << "\n";
    } else if (partition->parsed()) {
      const auto ingested = fedcalib::ingest_logits_file(part_in);
      fedcalib::PartitionSpec spec{part_beta, part_clients, part_seed};
      auto clients =
          fedcalib::dirichlet_label_skew_partition(ingested.records, spec);
      const fedcalib::SplitFractions fractions{part_train, part_cal, part_test};
      for (auto& client : clients)
        fedcalib::split_local(client, fractions, part_seed);
      fedcalib::export_logits_file(clients, part_out);
      std::cout << "wrote " << clients.size() << " clients to " << part_out
                << "\n";
    } else if (calibrate->parsed()) {
      auto cfg = fedcalib::load_experiment_config(cal_config);
      if (cal_seed >= 0) cfg.seed = static_cast<std::uint64_t>(cal_seed);
      if (cal_repeats > 0) cfg.repeats = cal_repeats;
      if (cal_per_client) cfg.per_client_metrics = true;
      const auto report = fedcalib::run_experiment(cfg);
      fedcalib::emit_report(report, cal_out);
      std::cout << report.method << ": cwECE " << report.cwece.mean << " (base "
                << report.base_cwece.mean << "), accuracy "
                << report.accuracy.mean << " (base "
                << report.base_accuracy.mean << ")\n";
    } else if (sweep_cmd->parsed()) {
      const auto cfg = fedcalib::load_experiment_config(sweep_config);
      const auto axis = fedcalib::sweep_axis_from_name(sweep_axis);
      const auto values = parse_double_list(sweep_values);
      const auto result = fedcalib::sweep(cfg, axis, values);
      fedcalib::emit_sweep(result, axis, sweep_out);
      std::cout << "swept " << values.size() << " points into " << sweep_out
                << "\n";
    } else if (dp_plan->parsed()) {
      const fedcalib::ClipSpec clip =
          plan_mode == "binning"
              ? fedcalib::ClipSpec::binning(plan_clip_pos, plan_clip_neg)
              : fedcalib::ClipSpec::scaling(plan_clip);
      const auto plan = fedcalib::make_privacy_plan(
          {plan_epsilon, plan_delta}, clip, plan_rounds, plan_classes);
      std::cout << fedcalib::privacy_plan_to_text(plan) << "\n";
    } else if (eval_cmd->parsed()) {
      const auto ingested = fedcalib::ingest_logits_file(eval_in);
      fedcalib::Matrix logits(ingested.records.size(),
                              ingested.records[0].logits.size());
      std::vector<int> labels(ingested.records.size());
      for (std::size_t i = 0; i < ingested.records.size(); ++i) {
        std::copy(ingested.records[i].logits.begin(),
                  ingested.records[i].logits.end(), logits.row(i).begin());
        labels[i] = ingested.records[i].label;
      }
      fedcalib::Matrix probs;
      if (!eval_calibrator.empty()) {
        std::ifstream in(eval_calibrator);
        if (!in) throw std::runtime_error("cannot open " + eval_calibrator);
        std::stringstream buf;
        buf << in.rdbuf();
        const auto calibrator = fedcalib::calibrator_from_text(buf.str());
        probs = fedcalib::predict_all(calibrator, logits);
      } else {
        probs = fedcalib::softmax_all(logits);
      }
      const fedcalib::PredictionSet preds{std::move(probs), std::move(labels)};
      const fedcalib::BinPartition bins{eval_bins};
      std::cout << "{\"cwece\": " << fedcalib::classwise_ece(preds, bins)
                << ", \"ece\": " << fedcalib::top_label_ece(preds, bins)
                << ", \"accuracy\": " << fedcalib::accuracy(preds)
                << ", \"nll\": " << fedcalib::nll(logits, preds.labels)
                << "}\n";
      if (!eval_reliability.empty()) {
        std::ofstream out(eval_reliability);
        if (!out) throw std::runtime_error("cannot write " + eval_reliability);
        fedcalib::write_reliability_csv(out,
                                        fedcalib::reliability_table(preds, bins));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
