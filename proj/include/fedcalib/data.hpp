#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fedcalib {

enum class Split { Train, Calibration, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct LogitRecord {
  int label = 0;
  std::vector<double> logits;
  Split split = Split::Train;

  friend bool operator==(const LogitRecord&, const LogitRecord&) = default;
};

struct ClientDataset {
  int client_id = 0;
  std::vector<LogitRecord> records;

  int num_classes() const {
    return records.empty() ? 0 : static_cast<int>(records[0].logits.size());
  }
};

struct PartitionSpec {
  double beta = 1.0;
  int num_clients = 1;
  std::uint64_t seed = 0;
};

// Label-skew partitioning: for each class j a client distribution is drawn
// from Dirichlet(beta * 1^K) and every class-j record is assigned
// independently from it. Small beta concentrates classes on few clients.
std::vector<ClientDataset> dirichlet_label_skew_partition(
    const std::vector<LogitRecord>& records, const PartitionSpec& spec);

struct SplitFractions {
  double train = 0.8;
  double cal = 0.1;
  double test = 0.1;
};

// Shuffles the client's records deterministically by (seed, client_id) and
// tags them Train/Calibration/Test. Calibration and test counts are rounded
// to nearest (half away from zero); Train takes the remainder.
void split_local(ClientDataset& client, const SplitFractions& fractions,
                 std::uint64_t seed);

struct SyntheticSpec {
  int num_classes = 10;
  int num_samples = 10000;
  double true_temp = 3.0;
  // Mixture weights over latent classes; empty means uniform.
  std::vector<double> class_weights;
  // Gap between class mean logits; larger separation gives a more accurate
  // base model.
  double separation = 2.0;
  std::uint64_t seed = 0;
};

// Draws latent logits z ~ N(separation * e_k, I) with k from class_weights,
// samples the label from softmax(z), and emits logits true_temp * z. The
// emitted population is exactly recalibrated by temperature true_temp.
std::vector<LogitRecord> synthetic_miscalibrated_generate(
    const SyntheticSpec& spec);

struct IngestedLogits {
  std::vector<LogitRecord> records;
  // Parallel to records when the file carries a client_id column, else empty.
  std::vector<int> client_ids;

  bool has_clients() const { return !client_ids.empty(); }
};

// CSV with header `client_id,split,label,logit_0,...,logit_{c-1}`; the
// client_id and split columns are optional. A `.gz` extension selects gzip.
IngestedLogits ingest_logits_file(const std::string& path);

std::vector<ClientDataset> group_by_client(const IngestedLogits& ingested);

void export_logits_file(const std::vector<LogitRecord>& records,
                        const std::string& path);
void export_logits_file(const std::vector<ClientDataset>& clients,
                        const std::string& path);

}  // namespace fedcalib
