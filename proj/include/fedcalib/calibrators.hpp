#pragma once

#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedcalib/data.hpp"
#include "fedcalib/matrix.hpp"

namespace fedcalib {

// Per-class positive/negative counts over 2^M fixed-width confidence bins.
// Stored as reals so clipped and noised histograms fit the same type.
struct ClassHistogramPair {
  std::vector<double> pos;
  std::vector<double> neg;

  friend bool operator==(const ClassHistogramPair&,
                         const ClassHistogramPair&) = default;
};

struct BinningModel {
  std::vector<ClassHistogramPair> per_class;
  int bin_exponent = 7;

  int num_bins() const { return 1 << bin_exponent; }
  int num_classes() const { return static_cast<int>(per_class.size()); }
};

// Binning calibrators at bin counts {2, 4, ..., 2^M} formed by merging the
// base histogram, fused by Bayesian score weighting.
struct BBQModel {
  int bin_exponent = 7;
  // merged[class][g] holds the histograms at 2^(g+1) bins; the last
  // granularity is the unmerged base.
  std::vector<std::vector<ClassHistogramPair>> merged;
  std::vector<std::vector<double>> log_scores;

  int num_classes() const { return static_cast<int>(merged.size()); }
  int num_granularities() const { return bin_exponent; }
};

enum class ScalerStructure { Temperature, Vector, Matrix };

const char* scaler_structure_name(ScalerStructure s);
ScalerStructure scaler_structure_from_name(const std::string& name);

// Temperature search bounds; separable data drives the optimum to a bound.
constexpr double kTempMin = 0.05;
constexpr double kTempMax = 20.0;

// Linear-map calibrator softmax(A z + b). For Temperature, A holds the single
// inverse temperature 1/a and b stays zero.
struct ScalerParams {
  ScalerStructure structure = ScalerStructure::Temperature;
  std::vector<double> A;
  std::vector<double> b;

  static ScalerParams identity(ScalerStructure structure, int classes);

  double temperature() const { return 1.0 / A[0]; }

  // DP updates travel as flat vectors.
  std::vector<double> flatten() const;
  static ScalerParams unflatten(ScalerStructure structure, int classes,
                                std::span<const double> flat);

  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

enum class WeightMode { None, AllWeight, ChangedWeight };

const char* weight_mode_name(WeightMode m);
WeightMode weight_mode_from_name(const std::string& name);

struct WeightSpec {
  WeightMode mode = WeightMode::None;
  std::vector<double> alphas;
};

struct Calibrator;

struct WeightedCalibrator {
  std::shared_ptr<const Calibrator> inner;
  WeightSpec weights;
};

struct OrderPreservingCalibrator {
  ScalerParams inner;
};

// Tagged union over all calibrator families; predicts from raw logits.
struct Calibrator {
  std::variant<BinningModel, BBQModel, ScalerParams, OrderPreservingCalibrator,
               WeightedCalibrator>
      model;

  std::vector<double> predict(std::span<const double> logits) const;
};

// --- binning ---------------------------------------------------------------

// One-vs-all histogram tallies over a client's calibration confidences.
// pos[j][m] counts samples with label j whose class-j confidence lands in bin
// m; neg[j][m] counts the rest.
std::vector<ClassHistogramPair> binning_fit_local(const Matrix& base_probs,
                                                  const std::vector<int>& labels,
                                                  int bin_exponent);
std::vector<ClassHistogramPair> binning_fit_local(const ClientDataset& client,
                                                  int bin_exponent);

// Per-class bin ratio P/(P+N). An exactly empty bin falls back to the input
// confidence; noisy ratios are clamped to [0,1].
std::vector<double> binning_per_class_raw(const BinningModel& model,
                                          std::span<const double> probs);
std::vector<double> binning_predict(const BinningModel& model,
                                    std::span<const double> probs);

std::vector<double> merge_bins(const std::vector<double>& hist,
                               int target_bins);

// Bayesian score of one histogram pair at its own granularity, evaluated in
// log-Gamma space. Counts must be nonnegative.
double bbq_log_score(const ClassHistogramPair& pair);

BBQModel build_bbq(const BinningModel& base);

std::vector<double> bbq_per_class_raw(const BBQModel& model,
                                      std::span<const double> probs);
std::vector<double> bbq_predict(const BBQModel& model,
                                std::span<const double> probs);

// --- heterogeneity weighting ------------------------------------------------

double alpha_nonprivate(double agg_class_count, double total_class_count);
double alpha_private(double agg_class_count, double sigma, int hist_len);

// Convex combination alpha_j * g_j + (1 - alpha_j) * p_j over per-class raw
// outputs, renormalized. ChangedWeight applies the combination only when the
// inner calibrator flips the argmax. The inner calibrator must be a binning
// or BBQ model.
std::vector<double> weighted_predict(const Calibrator& inner,
                                     std::span<const double> probs,
                                     const WeightSpec& weights);

// --- scaling ----------------------------------------------------------------

std::vector<double> scaler_predict(const ScalerParams& params,
                                   std::span<const double> logits);

struct ScalerFitOptions {
  int max_iters = 200;
  double tol = 1e-8;
  double step = 0.1;
  double temp_min = kTempMin;
  double temp_max = kTempMax;
};

struct ScalerFitResult {
  ScalerParams params;
  bool fitted = false;
  double final_nll = 0.0;
};

// Minimizes the NLL of scaler_predict on the given calibration samples.
// Temperature uses golden-section search on the unimodal 1-D objective;
// Vector/Matrix run deterministic full-batch gradient descent with a halving
// step schedule, started from `init`.
ScalerFitResult scaler_fit_local(const Matrix& logits,
                                 const std::vector<int>& labels,
                                 ScalerStructure structure,
                                 const ScalerParams& init,
                                 const ScalerFitOptions& opt = {});

// --- order-preserving wrapper ------------------------------------------------

// Rebuilds the inner calibrator's output so its ranking matches the input's:
// sorted-gap weights through an upper-triangular cumulative sum, then
// normalization. inner_out must be strictly positive (softmax output is).
std::vector<double> order_preserving_predict(std::span<const double> probs,
                                             std::span<const double> inner_out);

// --- batch application and persistence ---------------------------------------

Matrix softmax_all(const Matrix& logits);
Matrix predict_all(const Calibrator& calibrator, const Matrix& logits);

// Versioned structured-text (JSON) document for persistence and golden tests.
std::string calibrator_to_text(const Calibrator& calibrator);
Calibrator calibrator_from_text(const std::string& text);

}  // namespace fedcalib
