#include "fedcalib/federation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedcalib/kernels.hpp"
#include "fedcalib/metrics.hpp"
#include "fedcalib/rng.hpp"

namespace fedcalib {

namespace {

constexpr std::uint64_t kStreamParticipants = 0x21;
constexpr std::uint64_t kStreamNoise = 0x22;

double l2_norm(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

// Every clipped contribution is checked again where it enters aggregation;
// a violation here is an engine bug, not a data problem.
void assert_within_clip(const std::vector<double>& v, double bound,
                        double* max_seen) {
  const double norm = l2_norm(v);
  if (max_seen != nullptr) *max_seen = std::max(*max_seen, norm);
  if (norm > bound * (1.0 + 1e-9))
    throw std::logic_error("contribution exceeds clip norm at aggregation");
}

struct EvalContext {
  Matrix logits;
  std::vector<int> labels;
  int eval_bins = 15;
};

EvalContext make_eval_context(const std::vector<ClientDataset>& clients,
                              int eval_bins) {
  auto pooled = pool_split(clients, Split::Test);
  return {std::move(pooled.logits), std::move(pooled.labels), eval_bins};
}

void fill_metrics(const EvalContext& ctx, const Calibrator& calibrator,
                  RoundReport& report) {
  if (ctx.logits.rows() == 0) return;
  PredictionSet preds{predict_all(calibrator, ctx.logits), ctx.labels};
  const BinPartition bins{ctx.eval_bins};
  report.cwece = classwise_ece(preds, bins);
  report.ece = top_label_ece(preds, bins);
  report.accuracy = accuracy(preds);
}

std::vector<int> round_participants(const RoundConfig& cfg, int num_clients,
                                    int round) {
  if (!cfg.participant_schedule.empty()) {
    if (cfg.participant_schedule.size() <
        static_cast<std::size_t>(cfg.total_rounds))
      throw std::invalid_argument(
          "participant schedule shorter than the round count");
    return cfg.participant_schedule[static_cast<std::size_t>(round - 1)];
  }
  return sample_participants(
      num_clients, cfg.participation,
      derive_seed(cfg.seed, kStreamParticipants,
                  static_cast<std::uint64_t>(round)));
}

int dataset_classes(const std::vector<ClientDataset>& clients) {
  int c = 0;
  for (const auto& client : clients) {
    const int cc = client.num_classes();
    if (cc == 0) continue;
    if (c == 0) c = cc;
    if (c != cc)
      throw std::invalid_argument("clients disagree on class count");
  }
  if (c == 0) throw std::invalid_argument("no client has records");
  return c;
}

}  // namespace

std::vector<int> sample_participants(int num_clients, double participation,
                                     std::uint64_t round_seed) {
  if (!(participation > 0.0 && participation <= 1.0))
    throw std::invalid_argument("participation must be in (0,1]");
  Rng rng(round_seed);
  std::vector<int> out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    out.clear();
    for (int k = 0; k < num_clients; ++k)
      if (rng.uniform() < participation) out.push_back(k);
    if (!out.empty()) break;
  }
  return out;
}

std::vector<double> secure_agg_sum(
    const std::vector<std::vector<double>>& contributions,
    std::size_t length) {
  std::vector<double> total(length, 0.0);
  for (const auto& v : contributions) {
    if (v.size() != length)
      throw std::invalid_argument("contribution length mismatch");
    for (std::size_t i = 0; i < length; ++i) total[i] += v[i];
  }
  return total;
}

void AggregateState::accumulate(
    const std::vector<ClassHistogramPair>& contribution) {
  if (per_class.empty()) {
    per_class = contribution;
    return;
  }
  if (per_class.size() != contribution.size())
    throw std::invalid_argument("class count mismatch in accumulation");
  for (std::size_t j = 0; j < per_class.size(); ++j) {
    for (std::size_t m = 0; m < per_class[j].pos.size(); ++m) {
      per_class[j].pos[m] += contribution[j].pos[m];
      per_class[j].neg[m] += contribution[j].neg[m];
    }
  }
}

PooledSplit pool_split(const std::vector<ClientDataset>& clients, Split split) {
  std::size_t rows = 0;
  int c = 0;
  for (const auto& client : clients) {
    for (const auto& r : client.records) {
      if (r.split != split) continue;
      ++rows;
      c = static_cast<int>(r.logits.size());
    }
  }
  PooledSplit out;
  out.logits = Matrix(rows, static_cast<std::size_t>(c));
  out.labels.resize(rows);
  std::size_t i = 0;
  for (const auto& client : clients) {
    for (const auto& r : client.records) {
      if (r.split != split) continue;
      std::copy(r.logits.begin(), r.logits.end(), out.logits.row(i).begin());
      out.labels[i] = r.label;
      ++i;
    }
  }
  return out;
}

FedBinningResult run_fed_binning(const std::vector<ClientDataset>& clients,
                                 const FedBinningOptions& options,
                                 const RoundConfig& cfg) {
  const int c = dataset_classes(clients);
  const int bins = 1 << options.bin_exponent;
  const bool dp = cfg.dp.has_value();
  if (dp && cfg.dp->clip.mode != ClipSpec::Mode::Binning)
    throw std::invalid_argument("binning run requires binning clip norms");

  // Total class counts over all calibration splits, used by the non-private
  // weighting denominator.
  std::vector<double> total_class_count(static_cast<std::size_t>(c), 0.0);
  for (const auto& client : clients)
    for (const auto& r : client.records)
      if (r.split == Split::Calibration)
        total_class_count[static_cast<std::size_t>(r.label)] += 1.0;

  const auto eval_ctx = make_eval_context(clients, cfg.eval_bins);
  Rng noise_rng(derive_seed(cfg.seed, kStreamNoise));
  const double multiplier = dp ? cfg.dp->noise_multiplier() : 0.0;

  AggregateState state;
  FedBinningResult result;

  auto build_calibrator = [&](int rounds_done) {
    BinningModel model;
    model.bin_exponent = options.bin_exponent;
    model.per_class = state.per_class;
    if (model.per_class.empty()) {
      model.per_class.assign(static_cast<std::size_t>(c), ClassHistogramPair{});
      for (auto& pair : model.per_class) {
        pair.pos.assign(static_cast<std::size_t>(bins), 0.0);
        pair.neg.assign(static_cast<std::size_t>(bins), 0.0);
      }
    }

    Calibrator inner = options.bbq ? Calibrator{build_bbq(model)}
                                   : Calibrator{model};

    WeightSpec weights;
    weights.mode = options.weighting;
    if (options.weighting != WeightMode::None) {
      weights.alphas.resize(static_cast<std::size_t>(c));
      for (int j = 0; j < c; ++j) {
        double aggregated = 0.0;
        for (double v : model.per_class[static_cast<std::size_t>(j)].pos)
          aggregated += v;
        if (dp) {
          // Accumulated noise grows with the number of noised rounds.
          const double sigma_eff = cfg.dp->clip.pos_norm * multiplier *
                                   std::sqrt(std::max(rounds_done, 1));
          weights.alphas[static_cast<std::size_t>(j)] =
              alpha_private(aggregated, sigma_eff, bins);
        } else {
          weights.alphas[static_cast<std::size_t>(j)] = alpha_nonprivate(
              aggregated, total_class_count[static_cast<std::size_t>(j)]);
        }
      }
      WeightedCalibrator weighted;
      weighted.inner = std::make_shared<Calibrator>(std::move(inner));
      weighted.weights = weights;
      result.weights = weights;
      return Calibrator{std::move(weighted)};
    }
    result.weights = weights;
    return inner;
  };

  for (int t = 1; t <= cfg.total_rounds; ++t) {
    RoundReport report;
    report.round = t;
    report.participants = round_participants(cfg, static_cast<int>(clients.size()), t);
    report.noise_sigma = dp ? cfg.dp->sigma : 0.0;

    const auto& participants = report.participants;
    if (participants.empty()) {
      // Accepted empty draw: nothing is aggregated or released this round.
      fill_metrics(eval_ctx, build_calibrator(t), report);
      result.rounds.push_back(std::move(report));
      continue;
    }
    std::vector<std::vector<ClassHistogramPair>> fits(participants.size());
    const std::int64_t np = static_cast<std::int64_t>(participants.size());
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t i = 0; i < np; ++i) {
      auto fit = binning_fit_local(
          clients[static_cast<std::size_t>(participants[static_cast<std::size_t>(i)])],
          options.bin_exponent);
      if (fit.empty()) {
        fit.assign(static_cast<std::size_t>(c), ClassHistogramPair{});
        for (auto& pair : fit) {
          pair.pos.assign(static_cast<std::size_t>(bins), 0.0);
          pair.neg.assign(static_cast<std::size_t>(bins), 0.0);
        }
      }
      if (dp) {
        for (auto& pair : fit)
          clip_histogram_pair(pair, cfg.dp->clip.pos_norm,
                              cfg.dp->clip.neg_norm);
      }
      fits[static_cast<std::size_t>(i)] = std::move(fit);
    }

    std::vector<ClassHistogramPair> round_sum(static_cast<std::size_t>(c));
    for (int j = 0; j < c; ++j) {
      std::vector<std::vector<double>> pos_contributions;
      std::vector<std::vector<double>> neg_contributions;
      pos_contributions.reserve(fits.size());
      neg_contributions.reserve(fits.size());
      for (auto& fit : fits) {
        auto& pair = fit[static_cast<std::size_t>(j)];
        if (dp) {
          assert_within_clip(pair.pos, cfg.dp->clip.pos_norm,
                             &report.max_contribution_norm);
          assert_within_clip(pair.neg, cfg.dp->clip.neg_norm,
                             &report.max_contribution_norm);
        }
        pos_contributions.push_back(std::move(pair.pos));
        neg_contributions.push_back(std::move(pair.neg));
      }
      auto pos_sum = secure_agg_sum(pos_contributions,
                                    static_cast<std::size_t>(bins));
      auto neg_sum = secure_agg_sum(neg_contributions,
                                    static_cast<std::size_t>(bins));
      if (dp) {
        pos_sum = gaussian_mechanism(std::move(pos_sum), cfg.dp->clip.pos_norm,
                                     multiplier, noise_rng);
        neg_sum = gaussian_mechanism(std::move(neg_sum), cfg.dp->clip.neg_norm,
                                     multiplier, noise_rng);
      }
      round_sum[static_cast<std::size_t>(j)].pos = std::move(pos_sum);
      round_sum[static_cast<std::size_t>(j)].neg = std::move(neg_sum);
    }
    state.accumulate(round_sum);

    const auto calibrator = build_calibrator(t);
    fill_metrics(eval_ctx, calibrator, report);
    if (result.weights.mode != WeightMode::None &&
        !result.weights.alphas.empty()) {
      double mean = 0.0;
      for (double a : result.weights.alphas) mean += a;
      report.alpha_mean = mean / static_cast<double>(result.weights.alphas.size());
    }
    result.rounds.push_back(std::move(report));
  }

  result.calibrator = build_calibrator(cfg.total_rounds);
  result.accumulated.bin_exponent = options.bin_exponent;
  result.accumulated.per_class = state.per_class;
  if (result.accumulated.per_class.empty()) {
    result.accumulated.per_class.assign(static_cast<std::size_t>(c),
                                        ClassHistogramPair{});
    for (auto& pair : result.accumulated.per_class) {
      pair.pos.assign(static_cast<std::size_t>(bins), 0.0);
      pair.neg.assign(static_cast<std::size_t>(bins), 0.0);
    }
  }
  return result;
}

FedScalingResult run_fed_scaling(const std::vector<ClientDataset>& clients,
                                 const FedScalingOptions& options,
                                 const RoundConfig& cfg) {
  const int c = dataset_classes(clients);
  const bool dp = cfg.dp.has_value();
  if (dp && cfg.dp->clip.mode != ClipSpec::Mode::Scaling)
    throw std::invalid_argument("scaling run requires a scaling clip norm");

  const auto eval_ctx = make_eval_context(clients, cfg.eval_bins);
  Rng noise_rng(derive_seed(cfg.seed, kStreamNoise));
  const double multiplier = dp ? cfg.dp->noise_multiplier() : 0.0;
  const double expected_participants =
      cfg.participation * static_cast<double>(clients.size());

  ScalerParams global = ScalerParams::identity(options.structure, c);

  auto clamp_temperature = [&](ScalerParams& params) {
    if (params.structure == ScalerStructure::Temperature)
      params.A[0] = std::clamp(params.A[0], 1.0 / options.fit.temp_max,
                               1.0 / options.fit.temp_min);
  };

  auto wrap = [&](const ScalerParams& params) {
    return options.order_preserving
               ? Calibrator{OrderPreservingCalibrator{params}}
               : Calibrator{params};
  };

  FedScalingResult result;

  for (int t = 1; t <= cfg.total_rounds; ++t) {
    RoundReport report;
    report.round = t;
    report.participants =
        round_participants(cfg, static_cast<int>(clients.size()), t);
    report.noise_sigma = dp ? cfg.dp->sigma : 0.0;

    const auto& participants = report.participants;
    std::vector<ScalerFitResult> fits(participants.size());
    const std::int64_t np = static_cast<std::int64_t>(participants.size());
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
    for (std::int64_t i = 0; i < np; ++i) {
      const auto& client =
          clients[static_cast<std::size_t>(participants[static_cast<std::size_t>(i)])];
      std::size_t cal_rows = 0;
      for (const auto& r : client.records)
        if (r.split == Split::Calibration) ++cal_rows;
      Matrix logits(cal_rows, static_cast<std::size_t>(c));
      std::vector<int> labels(cal_rows);
      std::size_t row = 0;
      for (const auto& r : client.records) {
        if (r.split != Split::Calibration) continue;
        std::copy(r.logits.begin(), r.logits.end(), logits.row(row).begin());
        labels[row] = r.label;
        ++row;
      }
      fits[static_cast<std::size_t>(i)] =
          scaler_fit_local(logits, labels, options.structure, global,
                           options.fit);
    }

    std::vector<std::vector<double>> fitted;
    for (const auto& fit : fits)
      if (fit.fitted) fitted.push_back(fit.params.flatten());

    if (!fitted.empty()) {
      result.any_participants = true;
      const auto w = global.flatten();
      if (!dp) {
        FedAvgOptions avg;
        avg.server_lr = cfg.server_lr;
        const auto updated = fedavg_update(w, fitted, avg);
        global = ScalerParams::unflatten(options.structure, c, updated);
      } else {
        std::vector<std::vector<double>> updates;
        updates.reserve(fitted.size());
        for (const auto& wk : fitted) {
          std::vector<double> u(w.size());
          for (std::size_t i = 0; i < w.size(); ++i) u[i] = w[i] - wk[i];
          u = clip_l2(std::move(u), cfg.dp->clip.scaling_norm);
          assert_within_clip(u, cfg.dp->clip.scaling_norm,
                             &report.max_contribution_norm);
          updates.push_back(std::move(u));
        }
        auto sum = secure_agg_sum(updates, w.size());
        sum = gaussian_mechanism(std::move(sum), cfg.dp->clip.scaling_norm,
                                 multiplier, noise_rng);
        // Noise is applied to the sum; the divisor is the expected
        // participant count p*K, matching the pseudo-gradient form.
        std::vector<double> next(w.size());
        for (std::size_t i = 0; i < w.size(); ++i)
          next[i] = w[i] - cfg.server_lr * sum[i] / expected_participants;
        global = ScalerParams::unflatten(options.structure, c, next);
      }
      clamp_temperature(global);
    }

    fill_metrics(eval_ctx, wrap(global), report);
    result.rounds.push_back(std::move(report));
  }

  if (!result.any_participants)
    std::fprintf(stderr,
                 "warning: no participants in any round; returning initial "
                 "scaling parameters\n");

  result.params = global;
  result.calibrator = wrap(global);
  return result;
}

std::vector<double> fedavg_update(
    const std::vector<double>& global_params,
    const std::vector<std::vector<double>>& client_params,
    const FedAvgOptions& opt) {
  if (client_params.empty()) return global_params;
  std::vector<double> mean_update(global_params.size(), 0.0);
  for (const auto& wk : client_params) {
    if (wk.size() != global_params.size())
      throw std::invalid_argument("parameter shape mismatch");
    std::vector<double> u(global_params.size());
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = global_params[i] - wk[i];
    if (opt.clip_norm.has_value()) u = clip_l2(std::move(u), *opt.clip_norm);
    for (std::size_t i = 0; i < u.size(); ++i) mean_update[i] += u[i];
  }
  const double inv = 1.0 / static_cast<double>(client_params.size());
  std::vector<double> out(global_params.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = global_params[i] - opt.server_lr * mean_update[i] * inv;
  return out;
}

}  // namespace fedcalib
