#include "fedcalib/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fedcalib/metrics.hpp"

namespace fedcalib {

namespace {

using nlohmann::json;

bool is_binning_kind(const std::string& kind) {
  return kind == "fedbin" || kind == "fedbbq";
}

bool is_scaling_kind(const std::string& kind) {
  return kind == "fedtemp" || kind == "fedvector" || kind == "fedmatrix" ||
         kind == "fedopvector";
}

std::string format_sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.synthetic.has_value()) {
    json s{{"classes", cfg.synthetic->num_classes},
           {"samples", cfg.synthetic->num_samples},
           {"true_temp", cfg.synthetic->true_temp},
           {"separation", cfg.synthetic->separation}};
    if (!cfg.synthetic->class_weights.empty())
      s["class_weights"] = cfg.synthetic->class_weights;
    j["data"]["synthetic"] = std::move(s);
  }
  if (cfg.logits_file.has_value()) j["data"]["logits_file"] = *cfg.logits_file;
  if (cfg.partition.has_value()) {
    j["partition"] = {{"beta", cfg.partition->beta},
                      {"clients", cfg.partition->num_clients}};
  }
  j["splits"] = {{"train", cfg.splits.train},
                 {"cal", cfg.splits.cal},
                 {"test", cfg.splits.test}};
  j["calibrator"] = {{"kind", cfg.kind},
                     {"bin_exponent", cfg.bin_exponent},
                     {"weighting", weight_mode_name(cfg.weighting)}};
  j["rounds"] = {{"T", cfg.total_rounds},
                 {"participation", cfg.participation},
                 {"server_lr", cfg.server_lr}};
  if (cfg.privacy.has_value()) {
    json p{{"epsilon", cfg.privacy->epsilon}, {"delta", cfg.privacy->delta}};
    if (cfg.clip_scaling.has_value()) p["clip"] = *cfg.clip_scaling;
    if (cfg.clip_pos.has_value()) p["clip_pos"] = *cfg.clip_pos;
    if (cfg.clip_neg.has_value()) p["clip_neg"] = *cfg.clip_neg;
    j["privacy"] = std::move(p);
  } else {
    j["privacy"] = nullptr;
  }
  j["eval_bins"] = cfg.eval_bins;
  j["repeats"] = cfg.repeats;
  j["seed"] = cfg.seed;
  j["per_client_metrics"] = cfg.per_client_metrics;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("data")) {
    const auto& data = j.at("data");
    if (data.contains("synthetic")) {
      const auto& s = data.at("synthetic");
      SyntheticSpec spec;
      spec.num_classes = s.value("classes", spec.num_classes);
      spec.num_samples = s.value("samples", spec.num_samples);
      spec.true_temp = s.value("true_temp", spec.true_temp);
      spec.separation = s.value("separation", spec.separation);
      if (s.contains("class_weights"))
        spec.class_weights = s.at("class_weights").get<std::vector<double>>();
      cfg.synthetic = spec;
    }
    if (data.contains("logits_file"))
      cfg.logits_file = data.at("logits_file").get<std::string>();
  }
  if (j.contains("partition") && !j.at("partition").is_null()) {
    const auto& p = j.at("partition");
    PartitionSpec spec;
    spec.beta = p.value("beta", 1.0);
    spec.num_clients = p.value("clients", 1);
    cfg.partition = spec;
  }
  if (j.contains("splits")) {
    const auto& s = j.at("splits");
    cfg.splits.train = s.value("train", cfg.splits.train);
    cfg.splits.cal = s.value("cal", cfg.splits.cal);
    cfg.splits.test = s.value("test", cfg.splits.test);
  }
  if (j.contains("calibrator")) {
    const auto& c = j.at("calibrator");
    cfg.kind = c.value("kind", cfg.kind);
    cfg.bin_exponent = c.value("bin_exponent", cfg.bin_exponent);
    if (c.contains("weighting"))
      cfg.weighting =
          weight_mode_from_name(c.at("weighting").get<std::string>());
  }
  if (j.contains("rounds")) {
    const auto& r = j.at("rounds");
    cfg.total_rounds = r.value("T", cfg.total_rounds);
    cfg.participation = r.value("participation", cfg.participation);
    cfg.server_lr = r.value("server_lr", cfg.server_lr);
  }
  if (j.contains("privacy") && !j.at("privacy").is_null()) {
    const auto& p = j.at("privacy");
    PrivacyBudget budget;
    budget.epsilon = p.value("epsilon", budget.epsilon);
    budget.delta = p.value("delta", budget.delta);
    cfg.privacy = budget;
    if (p.contains("clip")) cfg.clip_scaling = p.at("clip").get<double>();
    if (p.contains("clip_pos")) cfg.clip_pos = p.at("clip_pos").get<double>();
    if (p.contains("clip_neg")) cfg.clip_neg = p.at("clip_neg").get<double>();
  }
  cfg.eval_bins = j.value("eval_bins", cfg.eval_bins);
  cfg.repeats = j.value("repeats", cfg.repeats);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.per_client_metrics =
      j.value("per_client_metrics", cfg.per_client_metrics);
  return cfg;
}

struct RepeatRun {
  RepeatResult result;
  std::optional<PrivacyPlan> plan;
};

RepeatRun run_one_repeat(const ExperimentConfig& cfg, int repeat) {
  const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(repeat);

  // Materialize client datasets.
  std::vector<ClientDataset> clients;
  if (cfg.synthetic.has_value()) {
    SyntheticSpec spec = *cfg.synthetic;
    spec.seed = seed;
    auto records = synthetic_miscalibrated_generate(spec);
    PartitionSpec part = cfg.partition.value_or(PartitionSpec{1.0, 1, 0});
    part.seed = seed;
    clients = dirichlet_label_skew_partition(records, part);
  } else if (cfg.logits_file.has_value()) {
    const auto ingested = ingest_logits_file(*cfg.logits_file);
    if (ingested.has_clients() && !cfg.partition.has_value()) {
      clients = group_by_client(ingested);
    } else {
      PartitionSpec part = cfg.partition.value_or(PartitionSpec{1.0, 1, 0});
      part.seed = seed;
      clients = dirichlet_label_skew_partition(ingested.records, part);
    }
  } else {
    throw std::runtime_error("config.data: no data source given");
  }
  for (auto& client : clients) split_local(client, cfg.splits, seed);

  int classes = 0;
  for (const auto& client : clients)
    classes = std::max(classes, client.num_classes());

  // Base metrics on the union of test splits.
  const auto test = pool_split(clients, Split::Test);
  if (test.logits.rows() == 0)
    throw std::runtime_error("no test samples after splitting");
  const BinPartition bins{cfg.eval_bins};
  PredictionSet base_preds{softmax_all(test.logits), test.labels};

  RepeatRun run;
  auto& out = run.result;
  out.base_cwece = classwise_ece(base_preds, bins);
  out.base_ece = top_label_ece(base_preds, bins);
  out.base_accuracy = accuracy(base_preds);

  RoundConfig round_cfg;
  round_cfg.total_rounds = cfg.total_rounds;
  round_cfg.participation = cfg.participation;
  round_cfg.seed = seed;
  round_cfg.server_lr = cfg.server_lr;
  round_cfg.eval_bins = cfg.eval_bins;

  if (cfg.privacy.has_value()) {
    if (cfg.kind == "identity")
      throw std::runtime_error("privacy not applicable to identity calibrator");
    const ClipSpec clip =
        is_binning_kind(cfg.kind)
            ? ClipSpec::binning(cfg.clip_pos.value_or(10.0),
                                cfg.clip_neg.value_or(50.0))
            : ClipSpec::scaling(cfg.clip_scaling.value_or(0.5));
    run.plan =
        make_privacy_plan(*cfg.privacy, clip, cfg.total_rounds, classes);
    round_cfg.dp = run.plan;
  }

  Calibrator calibrator;
  if (cfg.kind == "identity") {
    calibrator =
        Calibrator{ScalerParams::identity(ScalerStructure::Temperature,
                                          classes)};
  } else if (is_scaling_kind(cfg.kind)) {
    FedScalingOptions options;
    options.structure = cfg.kind == "fedmatrix" ? ScalerStructure::Matrix
                        : cfg.kind == "fedtemp" ? ScalerStructure::Temperature
                                                : ScalerStructure::Vector;
    options.order_preserving = cfg.kind == "fedopvector";
    auto result = run_fed_scaling(clients, options, round_cfg);
    calibrator = std::move(result.calibrator);
    out.rounds = std::move(result.rounds);
  } else if (is_binning_kind(cfg.kind)) {
    FedBinningOptions options;
    options.bin_exponent = cfg.bin_exponent;
    options.bbq = cfg.kind == "fedbbq";
    options.weighting = cfg.weighting;
    auto result = run_fed_binning(clients, options, round_cfg);
    calibrator = std::move(result.calibrator);
    out.rounds = std::move(result.rounds);
  } else {
    throw std::runtime_error("unknown calibrator kind: " + cfg.kind);
  }

  PredictionSet cal_preds{predict_all(calibrator, test.logits), test.labels};
  out.cwece = classwise_ece(cal_preds, bins);
  out.ece = top_label_ece(cal_preds, bins);
  out.accuracy = accuracy(cal_preds);
  out.accuracy_drop = (out.base_accuracy - out.accuracy) > 0.01;

  if (cfg.per_client_metrics) {
    for (const auto& client : clients) {
      const auto local = pool_split({client}, Split::Test);
      if (local.logits.rows() == 0) continue;
      PredictionSet preds{predict_all(calibrator, local.logits), local.labels};
      ClientMetrics m;
      m.client_id = client.client_id;
      m.test_count = local.logits.rows();
      m.cwece = classwise_ece(preds, bins);
      m.accuracy = accuracy(preds);
      out.per_client.push_back(m);
    }
  }
  return run;
}

json round_to_json(const RoundReport& r) {
  json j{{"round", r.round},
         {"participants", r.participants},
         {"cwece", r.cwece},
         {"ece", r.ece},
         {"accuracy", r.accuracy},
         {"noise_sigma", r.noise_sigma}};
  if (r.alpha_mean.has_value())
    j["alpha_summary"] = *r.alpha_mean;
  else
    j["alpha_summary"] = nullptr;
  return j;
}

}  // namespace

std::string ExperimentConfig::method_name() const {
  if (weighting == WeightMode::None) return kind;
  return kind + "-" + weight_mode_name(weighting);
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  return config_from_json(json::parse(json_text));
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;
  return config_from_json(j);
}

std::string experiment_config_to_text(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump(2);
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.repeats < 1) throw std::runtime_error("repeats must be >= 1");

  ExperimentReport report;
  report.config = cfg;
  report.method = cfg.method_name();

  std::vector<double> cwece_values;
  std::vector<double> ece_values;
  std::vector<double> acc_values;
  std::vector<double> base_cwece_values;
  std::vector<double> base_acc_values;

  for (int r = 0; r < cfg.repeats; ++r) {
    RepeatRun run;
    try {
      run = run_one_repeat(cfg, r);
    } catch (const std::exception& e) {
      throw std::runtime_error("experiment " + report.method + " repeat " +
                               std::to_string(r) + ": " + e.what());
    }
    if (run.plan.has_value()) report.plan = run.plan;
    cwece_values.push_back(run.result.cwece);
    ece_values.push_back(run.result.ece);
    acc_values.push_back(run.result.accuracy);
    base_cwece_values.push_back(run.result.base_cwece);
    base_acc_values.push_back(run.result.base_accuracy);
    report.accuracy_drop_flag |= run.result.accuracy_drop;
    report.repeats.push_back(std::move(run.result));
  }

  report.cwece = summarize(cwece_values);
  report.ece = summarize(ece_values);
  report.accuracy = summarize(acc_values);
  report.base_cwece = summarize(base_cwece_values);
  report.base_accuracy = summarize(base_acc_values);
  return report;
}

std::string report_to_json_text(const ExperimentReport& report) {
  json j;
  j["method"] = report.method;
  j["config"] = config_to_json(report.config);
  j["accuracy_drop_flag"] = report.accuracy_drop_flag;
  j["summary"] = {
      {"cwece", {{"mean", report.cwece.mean}, {"std", report.cwece.stddev}}},
      {"ece", {{"mean", report.ece.mean}, {"std", report.ece.stddev}}},
      {"accuracy",
       {{"mean", report.accuracy.mean}, {"std", report.accuracy.stddev}}},
      {"base_cwece",
       {{"mean", report.base_cwece.mean}, {"std", report.base_cwece.stddev}}},
      {"base_accuracy",
       {{"mean", report.base_accuracy.mean},
        {"std", report.base_accuracy.stddev}}}};
  if (report.plan.has_value())
    j["privacy_plan"] = json::parse(privacy_plan_to_text(*report.plan));
  else
    j["privacy_plan"] = nullptr;
  json repeats = json::array();
  for (const auto& r : report.repeats) {
    json entry{{"base_cwece", r.base_cwece},
               {"base_ece", r.base_ece},
               {"base_accuracy", r.base_accuracy},
               {"cwece", r.cwece},
               {"ece", r.ece},
               {"accuracy", r.accuracy},
               {"accuracy_drop", r.accuracy_drop}};
    if (!r.per_client.empty()) {
      json clients = json::array();
      for (const auto& m : r.per_client)
        clients.push_back(json{{"client_id", m.client_id},
                               {"test_count", m.test_count},
                               {"cwece", m.cwece},
                               {"accuracy", m.accuracy}});
      entry["per_client"] = std::move(clients);
    }
    repeats.push_back(std::move(entry));
  }
  j["repeats"] = std::move(repeats);
  return j.dump(2) + "\n";
}

std::string rounds_to_jsonl(const ExperimentReport& report) {
  std::string out;
  for (const auto& repeat : report.repeats)
    for (const auto& round : repeat.rounds)
      out += round_to_json(round).dump() + "\n";
  return out;
}

std::string summary_csv(const ExperimentReport& report) {
  std::string out = "method,cwece_mean,cwece_std,acc_mean,acc_std\n";
  out += report.method + ',' + format_sig6(report.cwece.mean) + ',' +
         format_sig6(report.cwece.stddev) + ',' +
         format_sig6(report.accuracy.mean) + ',' +
         format_sig6(report.accuracy.stddev) + '\n';
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_file(dir / "report.json", report_to_json_text(report));
  write_file(dir / "rounds.jsonl", rounds_to_jsonl(report));
  write_file(dir / "summary.csv", summary_csv(report));
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  json meta{{"created_unix",
             std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "T" || name == "rounds") return SweepAxis::Rounds;
  if (name == "beta") return SweepAxis::Beta;
  if (name == "epsilon") return SweepAxis::Epsilon;
  throw std::runtime_error("unknown sweep axis: " + name);
}

SweepResult sweep(const ExperimentConfig& cfg, SweepAxis axis,
                  const std::vector<double>& values) {
  SweepResult result;
  for (double value : values) {
    ExperimentConfig point = cfg;
    switch (axis) {
      case SweepAxis::Rounds:
        point.total_rounds = static_cast<int>(value);
        break;
      case SweepAxis::Beta:
        if (!point.partition.has_value())
          throw std::runtime_error("beta sweep requires a partition config");
        point.partition->beta = value;
        break;
      case SweepAxis::Epsilon:
        if (!point.privacy.has_value())
          throw std::runtime_error("epsilon sweep requires a privacy config");
        point.privacy->epsilon = value;
        break;
    }
    result.values.push_back(value);
    result.reports.push_back(run_experiment(point));
  }
  return result;
}

std::string sweep_csv(const SweepResult& result, SweepAxis) {
  std::string out = "axis_value,method,cwece_mean,cwece_std,acc_mean,acc_std\n";
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const auto& r = result.reports[i];
    out += format_sig6(result.values[i]) + ',' + r.method + ',' +
           format_sig6(r.cwece.mean) + ',' + format_sig6(r.cwece.stddev) +
           ',' + format_sig6(r.accuracy.mean) + ',' +
           format_sig6(r.accuracy.stddev) + '\n';
  }
  return out;
}

void emit_sweep(const SweepResult& result, SweepAxis axis,
                const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  write_file(dir / "summary.csv", sweep_csv(result, axis));
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "point_%g", result.values[i]);
    emit_report(result.reports[i], (dir / buf).string());
  }
}

}  // namespace fedcalib
