#include "fedcalib/calibrators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "fedcalib/kernels.hpp"

namespace fedcalib {

namespace {

using nlohmann::json;

std::vector<double> softmax_vec(std::span<const double> z) {
  std::vector<double> out(z.size());
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    out[j] = std::exp(z[j] - m);
    total += out[j];
  }
  for (auto& v : out) v /= total;
  return out;
}

// Cross-class normalization shared by binning and BBQ; a zero denominator
// returns the input distribution unchanged. Skipping the division when the
// mass is already 1 keeps the alpha=0 weighting identity exact.
std::vector<double> normalize_or_input(std::vector<double> raw,
                                       std::span<const double> probs) {
  double total = 0.0;
  for (double v : raw) total += v;
  if (total <= 0.0) return {probs.begin(), probs.end()};
  if (std::fabs(total - 1.0) <= 1e-12) return raw;
  for (auto& v : raw) v /= total;
  return raw;
}

double bin_ratio(double pos, double neg, double fallback) {
  const double denom = pos + neg;
  if (denom == 0.0) return fallback;
  return std::clamp(pos / denom, 0.0, 1.0);
}

std::vector<double> all_weight_combine(std::span<const double> raw,
                                       std::span<const double> probs,
                                       std::span<const double> alphas) {
  std::vector<double> out(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j)
    out[j] = alphas[j] * raw[j] + (1.0 - alphas[j]) * probs[j];
  return normalize_or_input(std::move(out), probs);
}

json scaler_to_json(const ScalerParams& params) {
  return json{{"structure", scaler_structure_name(params.structure)},
              {"A", params.A},
              {"b", params.b}};
}

ScalerParams scaler_from_json(const json& j) {
  ScalerParams params;
  params.structure =
      scaler_structure_from_name(j.at("structure").get<std::string>());
  params.A = j.at("A").get<std::vector<double>>();
  params.b = j.at("b").get<std::vector<double>>();
  return params;
}

json binning_to_json(const BinningModel& model) {
  json per_class = json::array();
  for (const auto& pair : model.per_class)
    per_class.push_back(json{{"pos", pair.pos}, {"neg", pair.neg}});
  return json{{"bin_exponent", model.bin_exponent},
              {"per_class", std::move(per_class)}};
}

BinningModel binning_from_json(const json& j) {
  BinningModel model;
  model.bin_exponent = j.at("bin_exponent").get<int>();
  for (const auto& pair : j.at("per_class")) {
    ClassHistogramPair p;
    p.pos = pair.at("pos").get<std::vector<double>>();
    p.neg = pair.at("neg").get<std::vector<double>>();
    model.per_class.push_back(std::move(p));
  }
  return model;
}

json calibrator_to_json(const Calibrator& calibrator);

Calibrator calibrator_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "binning") return {binning_from_json(j.at("model"))};
  if (kind == "bbq") return {build_bbq(binning_from_json(j.at("model")))};
  if (kind == "scaler") return {scaler_from_json(j.at("model"))};
  if (kind == "order_preserving")
    return {OrderPreservingCalibrator{scaler_from_json(j.at("model"))}};
  if (kind == "weighted") {
    WeightedCalibrator w;
    w.weights.mode =
        weight_mode_from_name(j.at("mode").get<std::string>());
    w.weights.alphas = j.at("alphas").get<std::vector<double>>();
    w.inner = std::make_shared<Calibrator>(
        calibrator_from_json(j.at("inner")));
    return {std::move(w)};
  }
  throw std::runtime_error("unknown calibrator kind: " + kind);
}

json calibrator_to_json(const Calibrator& calibrator) {
  json j;
  if (const auto* m = std::get_if<BinningModel>(&calibrator.model)) {
    j["kind"] = "binning";
    j["model"] = binning_to_json(*m);
  } else if (const auto* m = std::get_if<BBQModel>(&calibrator.model)) {
    // The merged histograms and scores are rebuilt on load; the base
    // granularity carries all the information.
    BinningModel base;
    base.bin_exponent = m->bin_exponent;
    for (const auto& per_class : m->merged)
      base.per_class.push_back(per_class.back());
    j["kind"] = "bbq";
    j["model"] = binning_to_json(base);
  } else if (const auto* m = std::get_if<ScalerParams>(&calibrator.model)) {
    j["kind"] = "scaler";
    j["model"] = scaler_to_json(*m);
  } else if (const auto* m =
                 std::get_if<OrderPreservingCalibrator>(&calibrator.model)) {
    j["kind"] = "order_preserving";
    j["model"] = scaler_to_json(m->inner);
  } else if (const auto* m =
                 std::get_if<WeightedCalibrator>(&calibrator.model)) {
    j["kind"] = "weighted";
    j["mode"] = weight_mode_name(m->weights.mode);
    j["alphas"] = m->weights.alphas;
    j["inner"] = calibrator_to_json(*m->inner);
  }
  return j;
}

}  // namespace

const char* scaler_structure_name(ScalerStructure s) {
  switch (s) {
    case ScalerStructure::Temperature:
      return "temperature";
    case ScalerStructure::Vector:
      return "vector";
    case ScalerStructure::Matrix:
      return "matrix";
  }
  return "temperature";
}

ScalerStructure scaler_structure_from_name(const std::string& name) {
  if (name == "temperature") return ScalerStructure::Temperature;
  if (name == "vector") return ScalerStructure::Vector;
  if (name == "matrix") return ScalerStructure::Matrix;
  throw std::runtime_error("unknown scaler structure: " + name);
}

const char* weight_mode_name(WeightMode m) {
  switch (m) {
    case WeightMode::None:
      return "none";
    case WeightMode::AllWeight:
      return "all";
    case WeightMode::ChangedWeight:
      return "changed";
  }
  return "none";
}

WeightMode weight_mode_from_name(const std::string& name) {
  if (name == "none") return WeightMode::None;
  if (name == "all") return WeightMode::AllWeight;
  if (name == "changed") return WeightMode::ChangedWeight;
  throw std::runtime_error("unknown weight mode: " + name);
}

ScalerParams ScalerParams::identity(ScalerStructure structure, int classes) {
  ScalerParams params;
  params.structure = structure;
  const auto c = static_cast<std::size_t>(classes);
  switch (structure) {
    case ScalerStructure::Temperature:
      params.A = {1.0};
      params.b.assign(c, 0.0);
      break;
    case ScalerStructure::Vector:
      params.A.assign(c, 1.0);
      params.b.assign(c, 0.0);
      break;
    case ScalerStructure::Matrix:
      params.A.assign(c * c, 0.0);
      for (std::size_t j = 0; j < c; ++j) params.A[j * c + j] = 1.0;
      params.b.assign(c, 0.0);
      break;
  }
  return params;
}

std::vector<double> ScalerParams::flatten() const {
  if (structure == ScalerStructure::Temperature) return A;
  std::vector<double> flat = A;
  flat.insert(flat.end(), b.begin(), b.end());
  return flat;
}

ScalerParams ScalerParams::unflatten(ScalerStructure structure, int classes,
                                     std::span<const double> flat) {
  ScalerParams params = identity(structure, classes);
  if (structure == ScalerStructure::Temperature) {
    params.A[0] = flat[0];
    return params;
  }
  std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(params.A.size()),
            params.A.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(params.A.size()),
            flat.end(), params.b.begin());
  return params;
}

std::vector<ClassHistogramPair> binning_fit_local(const Matrix& base_probs,
                                                  const std::vector<int>& labels,
                                                  int bin_exponent) {
  const int c = static_cast<int>(base_probs.cols());
  const int bins = 1 << bin_exponent;
  std::vector<ClassHistogramPair> out(static_cast<std::size_t>(c));
  for (auto& pair : out) {
    pair.pos.assign(static_cast<std::size_t>(bins), 0.0);
    pair.neg.assign(static_cast<std::size_t>(bins), 0.0);
  }
  kernels::ClassBinStats stats;
  kernels::class_bin_stats(base_probs, labels, bins, stats);
  for (int j = 0; j < c; ++j) {
    for (int m = 0; m < bins; ++m) {
      const std::size_t cell = static_cast<std::size_t>(j) * bins + m;
      const auto positives = stats.positives[cell];
      out[static_cast<std::size_t>(j)].pos[static_cast<std::size_t>(m)] =
          static_cast<double>(positives);
      out[static_cast<std::size_t>(j)].neg[static_cast<std::size_t>(m)] =
          static_cast<double>(stats.count[cell] - positives);
    }
  }
  return out;
}

std::vector<ClassHistogramPair> binning_fit_local(const ClientDataset& client,
                                                  int bin_exponent) {
  std::vector<const LogitRecord*> cal;
  for (const auto& r : client.records)
    if (r.split == Split::Calibration) cal.push_back(&r);

  const int c = client.num_classes();
  if (cal.empty()) {
    // Empty client: all-zero histograms of the declared width.
    std::vector<ClassHistogramPair> out(static_cast<std::size_t>(std::max(c, 0)));
    for (auto& pair : out) {
      pair.pos.assign(static_cast<std::size_t>(1 << bin_exponent), 0.0);
      pair.neg.assign(static_cast<std::size_t>(1 << bin_exponent), 0.0);
    }
    return out;
  }

  Matrix logits(cal.size(), static_cast<std::size_t>(c));
  std::vector<int> labels(cal.size());
  for (std::size_t i = 0; i < cal.size(); ++i) {
    std::copy(cal[i]->logits.begin(), cal[i]->logits.end(),
              logits.row(i).begin());
    labels[i] = cal[i]->label;
  }
  Matrix probs;
  kernels::softmax_rows(logits, probs);
  return binning_fit_local(probs, labels, bin_exponent);
}

std::vector<double> binning_per_class_raw(const BinningModel& model,
                                          std::span<const double> probs) {
  const int bins = model.num_bins();
  std::vector<double> raw(probs.size());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const int m = kernels::bin_index(probs[j], bins);
    const auto& pair = model.per_class[j];
    raw[j] = bin_ratio(pair.pos[static_cast<std::size_t>(m)],
                       pair.neg[static_cast<std::size_t>(m)], probs[j]);
  }
  return raw;
}

std::vector<double> binning_predict(const BinningModel& model,
                                    std::span<const double> probs) {
  return normalize_or_input(binning_per_class_raw(model, probs), probs);
}

std::vector<double> merge_bins(const std::vector<double>& hist,
                               int target_bins) {
  const int source = static_cast<int>(hist.size());
  if (target_bins < 1 || target_bins > source || source % target_bins != 0)
    throw std::invalid_argument("target bin count must divide source");
  const int factor = source / target_bins;
  std::vector<double> out(static_cast<std::size_t>(target_bins), 0.0);
  for (int m = 0; m < source; ++m)
    out[static_cast<std::size_t>(m / factor)] += hist[static_cast<std::size_t>(m)];
  return out;
}

double bbq_log_score(const ClassHistogramPair& pair) {
  const int bins = static_cast<int>(pair.pos.size());
  double total_count = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double nb = pair.pos[static_cast<std::size_t>(b)] +
                      pair.neg[static_cast<std::size_t>(b)];
    if (nb < 0.0) throw std::invalid_argument("negative histogram count");
    total_count += nb;
  }
  const double prior = total_count / static_cast<double>(bins);

  double log_score = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double m_b = pair.pos[static_cast<std::size_t>(b)];
    const double n_b = pair.neg[static_cast<std::size_t>(b)];
    const double count = m_b + n_b;
    const double midpoint = (static_cast<double>(b) + 0.5) / bins;
    const double alpha = (2.0 / bins) * midpoint;
    const double beta = (2.0 / bins) * (1.0 - midpoint);
    if (count > 0.0)
      log_score += std::lgamma(prior) - std::lgamma(count + prior);
    if (m_b > 0.0) log_score += std::lgamma(m_b + alpha) - std::lgamma(alpha);
    if (n_b > 0.0) log_score += std::lgamma(n_b + beta) - std::lgamma(beta);
  }
  if (!std::isfinite(log_score))
    throw std::invalid_argument("non-finite BBQ score");
  return log_score;
}

BBQModel build_bbq(const BinningModel& base) {
  BBQModel model;
  model.bin_exponent = base.bin_exponent;
  model.merged.resize(static_cast<std::size_t>(base.num_classes()));
  model.log_scores.resize(static_cast<std::size_t>(base.num_classes()));

  for (int j = 0; j < base.num_classes(); ++j) {
    auto& granularities = model.merged[static_cast<std::size_t>(j)];
    auto& scores = model.log_scores[static_cast<std::size_t>(j)];
    const auto& full = base.per_class[static_cast<std::size_t>(j)];
    for (int g = 1; g <= base.bin_exponent; ++g) {
      ClassHistogramPair merged;
      merged.pos = merge_bins(full.pos, 1 << g);
      merged.neg = merge_bins(full.neg, 1 << g);

      // Noisy counts are clamped at zero for scoring only; the ratios keep
      // the unclamped sums.
      ClassHistogramPair clamped = merged;
      for (auto& v : clamped.pos) v = std::max(v, 0.0);
      for (auto& v : clamped.neg) v = std::max(v, 0.0);
      scores.push_back(bbq_log_score(clamped));
      granularities.push_back(std::move(merged));
    }
  }
  return model;
}

std::vector<double> bbq_per_class_raw(const BBQModel& model,
                                      std::span<const double> probs) {
  std::vector<double> raw(probs.size(), 0.0);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    const auto& scores = model.log_scores[j];
    double max_score = scores[0];
    for (double s : scores) max_score = std::max(max_score, s);
    double weight_sum = 0.0;
    std::vector<double> weights(scores.size());
    for (std::size_t g = 0; g < scores.size(); ++g) {
      weights[g] = std::exp(scores[g] - max_score);
      weight_sum += weights[g];
    }
    double value = 0.0;
    for (std::size_t g = 0; g < scores.size(); ++g) {
      const auto& pair = model.merged[j][g];
      const int bins = static_cast<int>(pair.pos.size());
      const int m = kernels::bin_index(probs[j], bins);
      value += (weights[g] / weight_sum) *
               bin_ratio(pair.pos[static_cast<std::size_t>(m)],
                         pair.neg[static_cast<std::size_t>(m)], probs[j]);
    }
    raw[j] = value;
  }
  return raw;
}

std::vector<double> bbq_predict(const BBQModel& model,
                                std::span<const double> probs) {
  return normalize_or_input(bbq_per_class_raw(model, probs), probs);
}

double alpha_nonprivate(double agg_class_count, double total_class_count) {
  if (agg_class_count < 0.0 || total_class_count < 0.0)
    throw std::invalid_argument("negative count");
  if (total_class_count == 0.0) return 0.0;
  return std::min(agg_class_count / total_class_count, 1.0);
}

double alpha_private(double agg_class_count, double sigma, int hist_len) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  const double agg = std::max(agg_class_count, 0.0);
  const double expected_error =
      std::sqrt(2.0 / 3.141592653589793238462643383279502884) * sigma *
      static_cast<double>(hist_len);
  return std::min(agg / expected_error, 1.0);
}

std::vector<double> weighted_predict(const Calibrator& inner,
                                     std::span<const double> probs,
                                     const WeightSpec& weights) {
  std::vector<double> raw;
  if (const auto* m = std::get_if<BinningModel>(&inner.model))
    raw = binning_per_class_raw(*m, probs);
  else if (const auto* m = std::get_if<BBQModel>(&inner.model))
    raw = bbq_per_class_raw(*m, probs);
  else
    throw std::invalid_argument("weighting supports binning calibrators only");

  if (weights.mode == WeightMode::None)
    return normalize_or_input(std::move(raw), probs);

  if (weights.alphas.size() != probs.size())
    throw std::invalid_argument("alpha vector size mismatch");

  if (weights.mode == WeightMode::ChangedWeight) {
    auto unweighted = normalize_or_input(raw, probs);
    const int base_pred = kernels::argmax_row(probs);
    const int cal_pred = kernels::argmax_row(unweighted);
    if (base_pred == cal_pred) return unweighted;
  }
  return all_weight_combine(raw, probs, weights.alphas);
}

std::vector<double> scaler_predict(const ScalerParams& params,
                                   std::span<const double> logits) {
  const std::size_t c = logits.size();
  std::vector<double> linear(c, 0.0);
  switch (params.structure) {
    case ScalerStructure::Temperature:
      for (std::size_t j = 0; j < c; ++j) linear[j] = params.A[0] * logits[j];
      break;
    case ScalerStructure::Vector:
      for (std::size_t j = 0; j < c; ++j)
        linear[j] = params.A[j] * logits[j] + params.b[j];
      break;
    case ScalerStructure::Matrix:
      for (std::size_t j = 0; j < c; ++j) {
        double acc = params.b[j];
        for (std::size_t k = 0; k < c; ++k)
          acc += params.A[j * c + k] * logits[k];
        linear[j] = acc;
      }
      break;
  }
  return softmax_vec(linear);
}

namespace {

double scaled_nll(const Matrix& logits, const std::vector<int>& labels,
                  const ScalerParams& params) {
  const std::size_t n = logits.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto probs = scaler_predict(params, logits.row(i));
    const double p = probs[static_cast<std::size_t>(labels[i])];
    total += -std::log(std::max(p, 1e-300));
  }
  if (!std::isfinite(total))
    throw std::runtime_error("non-finite scaling objective");
  return total / static_cast<double>(n);
}

ScalerParams fit_temperature(const Matrix& logits,
                             const std::vector<int>& labels,
                             const ScalerFitOptions& opt, double* out_nll) {
  const auto objective = [&](double a) {
    ScalerParams p = ScalerParams::identity(ScalerStructure::Temperature,
                                            static_cast<int>(logits.cols()));
    p.A[0] = 1.0 / a;
    return scaled_nll(logits, labels, p);
  };

  // Golden-section search; the objective is unimodal in the temperature.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = opt.temp_min;
  double hi = opt.temp_max;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = objective(x1);
  double f2 = objective(x2);
  for (int iter = 0; iter < 200 && (hi - lo) > 1e-7; ++iter) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = objective(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = objective(x2);
    }
  }
  const double a = 0.5 * (lo + hi);
  ScalerParams params = ScalerParams::identity(ScalerStructure::Temperature,
                                               static_cast<int>(logits.cols()));
  params.A[0] = 1.0 / a;
  if (out_nll != nullptr) *out_nll = objective(a);
  return params;
}

void scaling_gradient(const Matrix& logits, const std::vector<int>& labels,
                      const ScalerParams& params, std::vector<double>& grad_A,
                      std::vector<double>& grad_b) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  grad_A.assign(params.A.size(), 0.0);
  grad_b.assign(params.b.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    const auto probs = scaler_predict(params, row);
    for (std::size_t j = 0; j < c; ++j) {
      const double resid =
          probs[j] - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0);
      grad_b[j] += resid;
      if (params.structure == ScalerStructure::Vector) {
        grad_A[j] += resid * row[j];
      } else {
        for (std::size_t k = 0; k < c; ++k)
          grad_A[j * c + k] += resid * row[k];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& g : grad_A) g *= inv_n;
  for (auto& g : grad_b) g *= inv_n;
}

ScalerParams fit_linear(const Matrix& logits, const std::vector<int>& labels,
                        ScalerStructure structure, const ScalerParams& init,
                        const ScalerFitOptions& opt, double* out_nll) {
  ScalerParams params = init;
  double step = opt.step;
  double best = scaled_nll(logits, labels, params);
  std::vector<double> grad_A;
  std::vector<double> grad_b;
  for (int iter = 0; iter < opt.max_iters; ++iter) {
    scaling_gradient(logits, labels, params, grad_A, grad_b);
    ScalerParams candidate = params;
    for (std::size_t j = 0; j < candidate.A.size(); ++j)
      candidate.A[j] -= step * grad_A[j];
    for (std::size_t j = 0; j < candidate.b.size(); ++j)
      candidate.b[j] -= step * grad_b[j];
    const double value = scaled_nll(logits, labels, candidate);
    if (value <= best) {
      const double improvement = best - value;
      params = std::move(candidate);
      best = value;
      if (improvement < opt.tol) break;
    } else {
      step *= 0.5;
      if (step < 1e-12) break;
    }
  }
  if (out_nll != nullptr) *out_nll = best;
  return params;
}

}  // namespace

ScalerFitResult scaler_fit_local(const Matrix& logits,
                                 const std::vector<int>& labels,
                                 ScalerStructure structure,
                                 const ScalerParams& init,
                                 const ScalerFitOptions& opt) {
  ScalerFitResult result;
  if (logits.rows() == 0) {
    result.params = ScalerParams::identity(
        structure, logits.cols() > 0 ? static_cast<int>(logits.cols()) : 2);
    result.fitted = false;
    return result;
  }
  if (structure == ScalerStructure::Temperature) {
    result.params = fit_temperature(logits, labels, opt, &result.final_nll);
  } else {
    result.params =
        fit_linear(logits, labels, structure, init, opt, &result.final_nll);
  }
  result.fitted = true;
  return result;
}

std::vector<double> order_preserving_predict(std::span<const double> probs,
                                             std::span<const double> inner_out) {
  const std::size_t c = probs.size();
  std::vector<std::size_t> perm(c);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] > probs[b];
  });

  // Sorted-gap weights; the last gap is taken against 0 so an identity inner
  // map reproduces the input exactly.
  std::vector<double> weight(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    const double gap = i + 1 < c ? probs[perm[i]] - probs[perm[i + 1]]
                                 : probs[perm[i]];
    weight[i] = std::fabs(gap) * inner_out[perm[i]];
  }

  std::vector<double> out(c, 0.0);
  double cumulative = 0.0;
  for (std::size_t i = c; i-- > 0;) {
    cumulative += weight[i];
    out[perm[i]] = cumulative;
  }
  double total = 0.0;
  for (double v : out) total += v;
  if (total <= 0.0) return {probs.begin(), probs.end()};
  for (auto& v : out) v /= total;
  return out;
}

std::vector<double> Calibrator::predict(std::span<const double> logits) const {
  if (const auto* m = std::get_if<BinningModel>(&model))
    return binning_predict(*m, softmax_vec(logits));
  if (const auto* m = std::get_if<BBQModel>(&model))
    return bbq_predict(*m, softmax_vec(logits));
  if (const auto* m = std::get_if<ScalerParams>(&model))
    return scaler_predict(*m, logits);
  if (const auto* m = std::get_if<OrderPreservingCalibrator>(&model)) {
    const auto probs = softmax_vec(logits);
    const auto inner = scaler_predict(m->inner, logits);
    return order_preserving_predict(probs, inner);
  }
  const auto& weighted = std::get<WeightedCalibrator>(model);
  return weighted_predict(*weighted.inner, softmax_vec(logits),
                          weighted.weights);
}

Matrix softmax_all(const Matrix& logits) {
  Matrix out;
  kernels::softmax_rows(logits, out);
  return out;
}

Matrix predict_all(const Calibrator& calibrator, const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  const std::int64_t n = static_cast<std::int64_t>(logits.rows());
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto probs = calibrator.predict(logits.row(idx));
    std::copy(probs.begin(), probs.end(), out.row(idx).begin());
  }
  return out;
}

std::string calibrator_to_text(const Calibrator& calibrator) {
  json j = calibrator_to_json(calibrator);
  j["version"] = 1;
  return j.dump(2);
}

Calibrator calibrator_from_text(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("version").get<int>() != 1)
    throw std::runtime_error("unsupported calibrator document version");
  return calibrator_from_json(j);
}

}  // namespace fedcalib
