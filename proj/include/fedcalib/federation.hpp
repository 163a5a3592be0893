#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedcalib/calibrators.hpp"
#include "fedcalib/data.hpp"
#include "fedcalib/matrix.hpp"
#include "fedcalib/privacy.hpp"

namespace fedcalib {

struct RoundConfig {
  int total_rounds = 1;
  double participation = 1.0;
  std::uint64_t seed = 0;
  std::optional<PrivacyPlan> dp;
  double server_lr = 1.0;
  int eval_bins = 15;
  // Test hook: when nonempty, round t uses participant_schedule[t-1] instead
  // of Poisson sampling.
  std::vector<std::vector<int>> participant_schedule;
};

struct RoundReport {
  int round = 0;
  std::vector<int> participants;
  double cwece = 0.0;
  double ece = 0.0;
  double accuracy = 0.0;
  std::optional<double> alpha_mean;
  double noise_sigma = 0.0;
  double max_contribution_norm = 0.0;
};

// Poisson sampling: each client joins independently with the given
// probability. An empty draw is retried once, then accepted (the round
// becomes a no-op).
std::vector<int> sample_participants(int num_clients, double participation,
                                     std::uint64_t round_seed);

// Simulated secure aggregation: the only output is the elementwise sum, so
// individual contributions never cross this interface.
std::vector<double> secure_agg_sum(
    const std::vector<std::vector<double>>& contributions, std::size_t length);

// Running sum of per-class histogram contributions across rounds. Plain
// elementwise addition, so accumulation commutes across rounds.
struct AggregateState {
  std::vector<ClassHistogramPair> per_class;

  bool empty() const { return per_class.empty(); }
  void accumulate(const std::vector<ClassHistogramPair>& contribution);
};

struct PooledSplit {
  Matrix logits;
  std::vector<int> labels;
};

// Union of the given split across clients, in client order.
PooledSplit pool_split(const std::vector<ClientDataset>& clients, Split split);

struct FedBinningOptions {
  int bin_exponent = 7;
  bool bbq = true;
  WeightMode weighting = WeightMode::None;
};

struct FedBinningResult {
  Calibrator calibrator;
  BinningModel accumulated;
  WeightSpec weights;
  std::vector<RoundReport> rounds;
};

FedBinningResult run_fed_binning(const std::vector<ClientDataset>& clients,
                                 const FedBinningOptions& options,
                                 const RoundConfig& cfg);

struct FedScalingOptions {
  ScalerStructure structure = ScalerStructure::Temperature;
  bool order_preserving = false;
  ScalerFitOptions fit;
};

struct FedScalingResult {
  Calibrator calibrator;
  ScalerParams params;
  std::vector<RoundReport> rounds;
  bool any_participants = false;
};

FedScalingResult run_fed_scaling(const std::vector<ClientDataset>& clients,
                                 const FedScalingOptions& options,
                                 const RoundConfig& cfg);

struct FedAvgOptions {
  double server_lr = 1.0;
  std::optional<double> clip_norm;
};

// Pseudo-gradient averaging: u_k = w - w_k (optionally clipped), then
// w - server_lr * mean(u_k). With server_lr 1 and no clipping this is plain
// parameter averaging.
std::vector<double> fedavg_update(
    const std::vector<double>& global_params,
    const std::vector<std::vector<double>>& client_params,
    const FedAvgOptions& opt = {});

}  // namespace fedcalib
