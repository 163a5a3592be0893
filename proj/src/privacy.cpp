#include "fedcalib/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace fedcalib {

namespace {

// log of the zCDP-to-DP conversion objective at a given Renyi order.
double log_delta_at(double alpha, double rho, double epsilon) {
  return (alpha - 1.0) * (alpha * rho - epsilon) - std::log(alpha - 1.0) +
         alpha * std::log1p(-1.0 / alpha);
}

}  // namespace

double delta_from_rho_epsilon(double rho, double epsilon) {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");

  double lo = 1.0 + 1e-6;
  double hi = std::max(500.0, 10.0 * epsilon / rho);

  // Golden-section on the convex log objective.
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = log_delta_at(x1, rho, epsilon);
  double f2 = log_delta_at(x2, rho, epsilon);
  for (int iter = 0; iter < 300 && (hi - lo) > 1e-10 * std::max(1.0, lo);
       ++iter) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = log_delta_at(x1, rho, epsilon);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = log_delta_at(x2, rho, epsilon);
    }
  }
  const double log_delta = log_delta_at(0.5 * (lo + hi), rho, epsilon);
  const double delta = std::exp(log_delta);
  if (delta >= 1.0) return 1.0;
  return std::max(delta, std::numeric_limits<double>::denorm_min());
}

double rho_from_epsilon_delta(double epsilon, double delta) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("delta must be in (0,1)");

  // Find a bracket: delta_from_rho_epsilon is increasing in rho.
  double lo = 1e-12;
  while (delta_from_rho_epsilon(lo, epsilon) > delta && lo > 1e-300) lo *= 0.5;
  double hi = std::max(lo * 2.0, 1e-6);
  while (delta_from_rho_epsilon(hi, epsilon) <= delta && hi < 1e9) hi *= 2.0;

  for (int iter = 0; iter < 200 && (hi - lo) > 1e-12 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (delta_from_rho_epsilon(mid, epsilon) <= delta)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double noise_multiplier(std::int64_t mechanism_count, double rho) {
  if (mechanism_count < 1) throw std::invalid_argument("mechanism count < 1");
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  return std::sqrt(static_cast<double>(mechanism_count) / (2.0 * rho));
}

double noise_sigma(const ClipSpec& clip, int rounds, int classes, double rho) {
  if (rounds < 1) throw std::invalid_argument("rounds < 1");
  if (clip.mode == ClipSpec::Mode::Scaling) {
    if (!(clip.scaling_norm > 0.0))
      throw std::invalid_argument("clip norm must be positive");
    return clip.scaling_norm * noise_multiplier(rounds, rho);
  }
  if (!(clip.pos_norm > 0.0 && clip.neg_norm > 0.0))
    throw std::invalid_argument("clip norms must be positive");
  if (classes < 2) throw std::invalid_argument("classes < 2");
  const std::int64_t count =
      2 * static_cast<std::int64_t>(classes) * rounds;
  return clip.max_norm() * noise_multiplier(count, rho);
}

PrivacyPlan make_privacy_plan(const PrivacyBudget& budget, const ClipSpec& clip,
                              int rounds, int classes) {
  PrivacyPlan plan;
  plan.budget = budget;
  plan.clip = clip;
  plan.rounds = rounds;
  plan.classes = classes;
  plan.rho.rho = rho_from_epsilon_delta(budget.epsilon, budget.delta);
  plan.mechanism_count =
      clip.mode == ClipSpec::Mode::Scaling
          ? static_cast<std::int64_t>(rounds)
          : 2 * static_cast<std::int64_t>(classes) * rounds;
  plan.sigma = noise_sigma(clip, rounds, classes, plan.rho.rho);
  return plan;
}

std::vector<double> clip_l2(std::vector<double> v, double clip_norm) {
  if (!(clip_norm > 0.0))
    throw std::invalid_argument("clip norm must be positive");
  double sq = 0.0;
  for (double x : v) sq += x * x;
  // The relative slack keeps clipping idempotent: rescaling lands within a
  // few ulps of the bound and must not trigger a second rescale.
  if (sq > clip_norm * clip_norm * (1.0 + 1e-12)) {
    const double scale = clip_norm / std::sqrt(sq);
    for (auto& x : v) x *= scale;
  }
  return v;
}

void clip_histogram_pair(ClassHistogramPair& pair, double c_plus,
                         double c_minus) {
  pair.pos = clip_l2(std::move(pair.pos), c_plus);
  pair.neg = clip_l2(std::move(pair.neg), c_minus);
}

std::vector<double> gaussian_mechanism(std::vector<double> v,
                                       double sensitivity, double sigma,
                                       Rng& rng) {
  if (!(sensitivity > 0.0))
    throw std::invalid_argument("sensitivity must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  for (auto& x : v) x += sensitivity * sigma * rng.normal();
  return v;
}

double total_rho(const PrivacyPlan& plan) {
  if (plan.mechanism_count < 1 || !(plan.sigma > 0.0))
    throw std::invalid_argument("malformed privacy plan");
  const double multiplier = plan.sigma / plan.clip.max_norm();
  const double consumed = static_cast<double>(plan.mechanism_count) /
                          (2.0 * multiplier * multiplier);
  if (std::fabs(consumed - plan.rho.rho) > 1e-9 * plan.rho.rho)
    throw std::runtime_error("privacy plan inconsistent with its rho target");
  return consumed;
}

std::string privacy_plan_to_text(const PrivacyPlan& plan) {
  nlohmann::json j{{"epsilon", plan.budget.epsilon},
                   {"delta", plan.budget.delta},
                   {"rho", plan.rho.rho},
                   {"sigma", plan.sigma},
                   {"mechanism_count", plan.mechanism_count},
                   {"rounds", plan.rounds},
                   {"classes", plan.classes}};
  if (plan.clip.mode == ClipSpec::Mode::Scaling) {
    j["clip"] = {{"mode", "scaling"}, {"norm", plan.clip.scaling_norm}};
  } else {
    j["clip"] = {{"mode", "binning"},
                 {"pos_norm", plan.clip.pos_norm},
                 {"neg_norm", plan.clip.neg_norm}};
  }
  return j.dump(2);
}

}  // namespace fedcalib
