#include "fedcalib/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedcalib/kernels.hpp"
#include "fedcalib/matrix.hpp"
#include "fedcalib/rng.hpp"

#if FEDCALIB_HAVE_ZLIB
#include <zlib.h>
#endif

namespace fedcalib {

namespace {

constexpr std::uint64_t kStreamDirichlet = 0x11;
constexpr std::uint64_t kStreamSplit = 0x12;
constexpr std::uint64_t kStreamSynthetic = 0x13;

int infer_classes(const std::vector<LogitRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records");
  return static_cast<int>(records[0].logits.size());
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line,
                             const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

bool has_gz_extension(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

// Minimal line-oriented reader over plain or gzip files.
class LineReader {
 public:
  explicit LineReader(const std::string& path) : path_(path) {
    if (has_gz_extension(path)) {
#if FEDCALIB_HAVE_ZLIB
      gz_ = gzopen(path.c_str(), "rb");
      if (gz_ == nullptr) throw std::runtime_error("cannot open " + path);
#else
      throw std::runtime_error("gzip support not built: " + path);
#endif
    } else {
      plain_.open(path);
      if (!plain_) throw std::runtime_error("cannot open " + path);
    }
  }

  ~LineReader() {
#if FEDCALIB_HAVE_ZLIB
    if (gz_ != nullptr) gzclose(gz_);
#endif
  }

  bool next(std::string& line) {
#if FEDCALIB_HAVE_ZLIB
    if (gz_ != nullptr) {
      line.clear();
      char buf[4096];
      bool got = false;
      while (gzgets(gz_, buf, sizeof buf) != nullptr) {
        got = true;
        line += buf;
        if (!line.empty() && line.back() == '\n') {
          line.pop_back();
          break;
        }
      }
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return got;
    }
#endif
    if (!std::getline(plain_, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

 private:
  std::string path_;
  std::ifstream plain_;
#if FEDCALIB_HAVE_ZLIB
  gzFile gz_ = nullptr;
#else
  void* gz_ = nullptr;
#endif
};

class LineWriter {
 public:
  explicit LineWriter(const std::string& path) {
    if (has_gz_extension(path)) {
#if FEDCALIB_HAVE_ZLIB
      gz_ = gzopen(path.c_str(), "wb");
      if (gz_ == nullptr) throw std::runtime_error("cannot open " + path);
#else
      throw std::runtime_error("gzip support not built: " + path);
#endif
    } else {
      plain_.open(path);
      if (!plain_) throw std::runtime_error("cannot open " + path);
    }
  }

  ~LineWriter() {
#if FEDCALIB_HAVE_ZLIB
    if (gz_ != nullptr) gzclose(gz_);
#endif
  }

  void write(const std::string& s) {
#if FEDCALIB_HAVE_ZLIB
    if (gz_ != nullptr) {
      if (gzwrite(gz_, s.data(), static_cast<unsigned>(s.size())) == 0 &&
          !s.empty())
        throw std::runtime_error("gzip write failed");
      return;
    }
#endif
    plain_ << s;
  }

 private:
  std::ofstream plain_;
#if FEDCALIB_HAVE_ZLIB
  gzFile gz_ = nullptr;
#else
  void* gz_ = nullptr;
#endif
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string record_line(const LogitRecord& r) {
  std::string line = std::string(split_name(r.split)) + ',' +
                     std::to_string(r.label);
  for (double v : r.logits) {
    line += ',';
    line += format_double(v);
  }
  line += '\n';
  return line;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Calibration:
      return "cal";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "cal") return Split::Calibration;
  if (name == "test") return Split::Test;
  throw std::runtime_error("unknown split tag: " + name);
}

std::vector<ClientDataset> dirichlet_label_skew_partition(
    const std::vector<LogitRecord>& records, const PartitionSpec& spec) {
  if (spec.beta <= 0.0) throw std::invalid_argument("beta must be positive");
  if (spec.num_clients < 1)
    throw std::invalid_argument("need at least one client");
  const int c = infer_classes(records);
  for (const auto& rec : records) {
    if (rec.label < 0 || rec.label >= c)
      throw std::invalid_argument("label outside [0, classes)");
    if (static_cast<int>(rec.logits.size()) != c)
      throw std::invalid_argument("inconsistent class count across records");
  }

  std::vector<ClientDataset> clients(
      static_cast<std::size_t>(spec.num_clients));
  for (int k = 0; k < spec.num_clients; ++k)
    clients[static_cast<std::size_t>(k)].client_id = k;

  // Per class: one Dirichlet draw, then independent categorical assignment
  // of that class's records in input order.
  for (int j = 0; j < c; ++j) {
    Rng rng(derive_seed(spec.seed, kStreamDirichlet,
                        static_cast<std::uint64_t>(j)));
    const auto shares = rng.dirichlet(spec.beta, spec.num_clients);
    for (const auto& rec : records) {
      if (rec.label != j) continue;
      const int k = rng.categorical(shares.data(), spec.num_clients);
      clients[static_cast<std::size_t>(k)].records.push_back(rec);
    }
  }
  return clients;
}

void split_local(ClientDataset& client, const SplitFractions& fractions,
                 std::uint64_t seed) {
  if (!(fractions.train > 0.0 && fractions.cal > 0.0 && fractions.test > 0.0))
    throw std::invalid_argument("split fractions must be positive");
  if (std::fabs(fractions.train + fractions.cal + fractions.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");

  const std::size_t n = client.records.size();
  if (n == 0) {
    std::cerr << "warning: client " << client.client_id
              << " has no records; splits are empty\n";
    return;
  }

  Rng rng(derive_seed(seed, kStreamSplit,
                      static_cast<std::uint64_t>(client.client_id)));
  // Fisher-Yates over the record order.
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(client.records[i], client.records[j]);
  }

  auto round_half_away = [](double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
  };
  std::size_t cal_n = round_half_away(static_cast<double>(n) * fractions.cal);
  std::size_t test_n =
      round_half_away(static_cast<double>(n) * fractions.test);
  while (cal_n + test_n > n) (test_n > 0 ? test_n : cal_n) -= 1;
  const std::size_t train_n = n - cal_n - test_n;

  for (std::size_t i = 0; i < n; ++i) {
    if (i < train_n)
      client.records[i].split = Split::Train;
    else if (i < train_n + cal_n)
      client.records[i].split = Split::Calibration;
    else
      client.records[i].split = Split::Test;
  }
}

std::vector<LogitRecord> synthetic_miscalibrated_generate(
    const SyntheticSpec& spec) {
  if (spec.num_classes < 2)
    throw std::invalid_argument("need at least 2 classes");
  if (spec.num_samples < 1)
    throw std::invalid_argument("need at least 1 sample");
  if (!(spec.true_temp > 0.0))
    throw std::invalid_argument("true_temp must be positive");
  if (!(spec.separation > 0.0))
    throw std::invalid_argument("separation must be positive");

  std::vector<double> weights = spec.class_weights;
  if (weights.empty()) {
    weights.assign(static_cast<std::size_t>(spec.num_classes),
                   1.0 / spec.num_classes);
  } else {
    if (static_cast<int>(weights.size()) != spec.num_classes)
      throw std::invalid_argument("class_weights size mismatch");
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("negative class weight");
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("class weights sum to 0");
    for (auto& w : weights) w /= total;
  }

  Rng rng(derive_seed(spec.seed, kStreamSynthetic));
  std::vector<LogitRecord> out;
  out.reserve(static_cast<std::size_t>(spec.num_samples));
  std::vector<double> z(static_cast<std::size_t>(spec.num_classes));
  std::vector<double> probs(static_cast<std::size_t>(spec.num_classes));

  for (int i = 0; i < spec.num_samples; ++i) {
    const int latent = rng.categorical(weights.data(), spec.num_classes);
    for (int j = 0; j < spec.num_classes; ++j) {
      z[static_cast<std::size_t>(j)] =
          (j == latent ? spec.separation : 0.0) + rng.normal();
    }
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double total = 0.0;
    for (int j = 0; j < spec.num_classes; ++j) {
      probs[static_cast<std::size_t>(j)] =
          std::exp(z[static_cast<std::size_t>(j)] - m);
      total += probs[static_cast<std::size_t>(j)];
    }
    for (auto& p : probs) p /= total;

    LogitRecord rec;
    rec.label = rng.categorical(probs.data(), spec.num_classes);
    rec.logits.resize(static_cast<std::size_t>(spec.num_classes));
    for (int j = 0; j < spec.num_classes; ++j)
      rec.logits[static_cast<std::size_t>(j)] =
          spec.true_temp * z[static_cast<std::size_t>(j)];
    out.push_back(std::move(rec));
  }
  return out;
}

IngestedLogits ingest_logits_file(const std::string& path) {
  LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw std::runtime_error(path + ": empty file");

  const auto header = split_csv_line(line);
  std::size_t col = 0;
  bool has_client = false;
  bool has_split = false;
  if (col < header.size() && header[col] == "client_id") {
    has_client = true;
    ++col;
  }
  if (col < header.size() && header[col] == "split") {
    has_split = true;
    ++col;
  }
  if (col >= header.size() || header[col] != "label")
    parse_fail(path, 1, "header mismatch: expected label column");
  ++col;
  const int c = static_cast<int>(header.size() - col);
  if (c < 2) parse_fail(path, 1, "header mismatch: need at least 2 logits");
  for (int j = 0; j < c; ++j) {
    if (header[col + static_cast<std::size_t>(j)] !=
        "logit_" + std::to_string(j))
      parse_fail(path, 1, "header mismatch: expected logit_" +
                              std::to_string(j));
  }

  IngestedLogits out;
  std::size_t line_no = 1;
  while (reader.next(line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      parse_fail(path, line_no,
                 "expected " + std::to_string(header.size()) + " fields, got " +
                     std::to_string(fields.size()));
    std::size_t f = 0;
    LogitRecord rec;
    try {
      if (has_client) out.client_ids.push_back(std::stoi(fields[f++]));
      if (has_split) rec.split = split_from_name(fields[f++]);
      rec.label = std::stoi(fields[f++]);
      rec.logits.resize(static_cast<std::size_t>(c));
      for (int j = 0; j < c; ++j) {
        std::size_t pos = 0;
        const std::string& s = fields[f++];
        rec.logits[static_cast<std::size_t>(j)] = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing chars");
      }
    } catch (const std::exception& e) {
      parse_fail(path, line_no, std::string("malformed row: ") + e.what());
    }
    if (rec.label < 0 || rec.label >= c)
      parse_fail(path, line_no, "label outside [0, " + std::to_string(c) + ")");
    for (double v : rec.logits)
      if (!std::isfinite(v)) parse_fail(path, line_no, "non-finite logit");
    out.records.push_back(std::move(rec));
  }
  return out;
}

std::vector<ClientDataset> group_by_client(const IngestedLogits& ingested) {
  if (!ingested.has_clients())
    throw std::runtime_error("logits file has no client_id column");
  std::map<int, ClientDataset> by_id;
  for (std::size_t i = 0; i < ingested.records.size(); ++i) {
    const int id = ingested.client_ids[i];
    auto& client = by_id[id];
    client.client_id = id;
    client.records.push_back(ingested.records[i]);
  }
  std::vector<ClientDataset> out;
  out.reserve(by_id.size());
  for (auto& [id, client] : by_id) out.push_back(std::move(client));
  return out;
}

void export_logits_file(const std::vector<LogitRecord>& records,
                        const std::string& path) {
  const int c = infer_classes(records);
  LineWriter writer(path);
  std::string header = "split,label";
  for (int j = 0; j < c; ++j) header += ",logit_" + std::to_string(j);
  header += '\n';
  writer.write(header);
  for (const auto& r : records) {
    if (static_cast<int>(r.logits.size()) != c)
      throw std::runtime_error("inconsistent class count across records");
    writer.write(record_line(r));
  }
}

void export_logits_file(const std::vector<ClientDataset>& clients,
                        const std::string& path) {
  int c = 0;
  for (const auto& client : clients)
    if (!client.records.empty()) c = client.num_classes();
  if (c == 0) throw std::runtime_error("no records to export");

  LineWriter writer(path);
  std::string header = "client_id,split,label";
  for (int j = 0; j < c; ++j) header += ",logit_" + std::to_string(j);
  header += '\n';
  writer.write(header);
  for (const auto& client : clients) {
    for (const auto& r : client.records) {
      if (static_cast<int>(r.logits.size()) != c)
        throw std::runtime_error("inconsistent class count across records");
      writer.write(std::to_string(client.client_id) + ',' + record_line(r));
    }
  }
}

}  // namespace fedcalib
