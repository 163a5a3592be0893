#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedcalib/calibrators.hpp"
#include "fedcalib/rng.hpp"

namespace fedcalib {

struct PrivacyBudget {
  double epsilon = 1.0;
  double delta = 1e-5;
};

struct ZcdpBudget {
  double rho = 0.0;
};

// L2 clipping norms. Scaling clips the flattened parameter update; binning
// clips positive and negative histograms separately per class.
struct ClipSpec {
  enum class Mode { Scaling, Binning };

  Mode mode = Mode::Scaling;
  double scaling_norm = 0.5;
  double pos_norm = 10.0;
  double neg_norm = 50.0;

  static ClipSpec scaling(double c) {
    return {Mode::Scaling, c, 0.0, 0.0};
  }
  static ClipSpec binning(double c_plus, double c_minus) {
    return {Mode::Binning, 0.0, c_plus, c_minus};
  }

  // The norm governing the headline sigma; per-histogram noise uses the
  // respective norm times the shared multiplier.
  double max_norm() const {
    return mode == Mode::Scaling ? scaling_norm : std::max(pos_norm, neg_norm);
  }
};

// Everything the engine needs to run one DP calibration: budget, the zCDP
// budget it converts to, clip norms, the per-invocation noise scale and the
// total Gaussian-mechanism count (T for scaling, 2cT for binning).
struct PrivacyPlan {
  PrivacyBudget budget;
  ZcdpBudget rho;
  ClipSpec clip;
  int rounds = 1;
  int classes = 2;
  double sigma = 0.0;
  std::int64_t mechanism_count = 0;

  // Unitless noise multiplier; a histogram with clip norm C receives noise
  // of standard deviation C * multiplier.
  double noise_multiplier() const { return sigma / clip.max_norm(); }
};

// Smallest delta for which rho-zCDP implies (epsilon, delta)-DP:
// min over alpha > 1 of exp((alpha-1)(alpha rho - epsilon)) / (alpha-1)
// * (1 - 1/alpha)^alpha, minimized in log space (the objective is convex).
double delta_from_rho_epsilon(double rho, double epsilon);

// Largest rho whose conversion stays within delta; bisection on the monotone
// map above.
double rho_from_epsilon_delta(double epsilon, double delta);

double noise_multiplier(std::int64_t mechanism_count, double rho);

// Per-invocation sigma: C * sqrt(T / 2 rho) for scaling and
// max(C+, C-) * sqrt(2 c T / 2 rho) for binning.
double noise_sigma(const ClipSpec& clip, int rounds, int classes, double rho);

PrivacyPlan make_privacy_plan(const PrivacyBudget& budget, const ClipSpec& clip,
                              int rounds, int classes);

std::vector<double> clip_l2(std::vector<double> v, double clip_norm);

void clip_histogram_pair(ClassHistogramPair& pair, double c_plus,
                         double c_minus);

// v + sensitivity * N(0, sigma^2 I), drawn from the given stream.
std::vector<double> gaussian_mechanism(std::vector<double> v,
                                       double sensitivity, double sigma,
                                       Rng& rng);

// Total zCDP consumed by the plan's mechanisms, recomputed from sigma and the
// clip norms. Throws if it disagrees with the plan's target rho beyond 1e-9
// relative.
double total_rho(const PrivacyPlan& plan);

// JSON document with epsilon, delta, rho, sigma, clip norms and the
// mechanism count; embedded in experiment reports.
std::string privacy_plan_to_text(const PrivacyPlan& plan);

}  // namespace fedcalib
