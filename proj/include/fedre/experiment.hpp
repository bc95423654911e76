#pragma once

// Config-driven experiments: JSON config, federation construction from a
// master seed, multi-seed runs, metric export and the inversion study.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedre/data.hpp"
#include "fedre/entangle.hpp"
#include "fedre/federation.hpp"
#include "fedre/privacy.hpp"
#include "fedre/protocol.hpp"
#include "fedre/strategy.hpp"

namespace fedre {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DatasetConfig {
  std::string kind = "blobs";  // blobs | csv
  std::size_t classes = 2;
  std::size_t per_class = 250;
  std::size_t dim = 2;
  double spread = 1.0;
  double separation = 3.0;
  std::string path;  // csv only

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct PartitionConfig {
  std::string mode = "PRA";  // PRA | PAT | LongTail
  double alpha = 0.1;
  std::size_t categories_per_client = 2;
  double imbalance_factor = 100.0;

  friend bool operator==(const PartitionConfig&, const PartitionConfig&) = default;
};

struct PrivacyConfig {
  std::size_t steps = 400;
  double lr = 0.05;
  double init_stddev = 1.0;
  std::size_t max_restarts = 3;
  double data_range = 0.0;  // 0: use the dataset's empirical range

  friend bool operator==(const PrivacyConfig&, const PrivacyConfig&) = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionConfig partition;
  std::size_t num_clients = 10;
  double participation_rate = 1.0;
  std::size_t rounds = 100;
  StrategyKind strategy = StrategyKind::FedRE;
  Sampling sampling = Sampling::RS;
  ReKind mechanism = ReKind::RAP;
  WeightDistribution distribution = WeightDistribution::Uniform;
  double proto_lambda = 0.1;
  RmOp rm = RmOp::AP;
  std::size_t unified_dim = 8;
  // Layer widths after the input, per client; the last width is d_k.
  std::vector<std::vector<std::size_t>> architectures;
  TrainOptions client{0.05, 16, 1};
  TrainOptions server{0.01, 10, 5};
  double train_fraction = 0.75;
  CommConvention comm = CommConvention::representation_only;
  std::vector<std::uint64_t> seeds{0};
  std::string output;
  PrivacyConfig privacy;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Heterogeneous defaults: hidden width 16/24/32 cycling, d_k = d or 2d.
inline std::vector<std::size_t> default_architecture(std::size_t client, std::size_t unified_dim) {
  return {16 + 8 * (client % 3), unified_dim * (1 + client % 2)};
}

// ---------------------------------------------------------------------------
// Enum <-> string

namespace detail {

template <typename E, std::size_t N>
E parse_enum(const std::string& key, const std::string& value, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, e] : table)
    if (value == name) return e;
  std::string allowed;
  for (const auto& [name, e] : table) allowed += std::string(allowed.empty() ? "" : ", ") + name;
  throw ConfigError("config key '" + key + "': unknown value '" + value + "' (expected one of " + allowed + ")");
}

template <typename E, std::size_t N>
std::string enum_name(E value, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, e] : table)
    if (e == value) return name;
  return "?";
}

inline constexpr std::pair<const char*, StrategyKind> kStrategies[] = {
    {"Local", StrategyKind::Local},           {"FedAllRep", StrategyKind::FedAllRep},
    {"FedGHStyle", StrategyKind::FedGHStyle}, {"FedProtoStyle", StrategyKind::FedProtoStyle},
    {"FedRE", StrategyKind::FedRE}};
inline constexpr std::pair<const char*, Sampling> kSamplings[] = {{"RS", Sampling::RS}, {"FS", Sampling::FS}};
inline constexpr std::pair<const char*, ReKind> kMechanisms[] = {{"RSR", ReKind::RSR}, {"VAR", ReKind::VAR},
                                                                  {"RAR", ReKind::RAR}, {"RSP", ReKind::RSP},
                                                                  {"VAP", ReKind::VAP}, {"RAP", ReKind::RAP}};
inline constexpr std::pair<const char*, WeightDistribution> kDistributions[] = {
    {"Uniform", WeightDistribution::Uniform},
    {"Gaussian", WeightDistribution::Gaussian},
    {"Laplace", WeightDistribution::Laplace}};
inline constexpr std::pair<const char*, RmOp> kRmOps[] = {{"AP", RmOp::AP}, {"MP", RmOp::MP}, {"FC", RmOp::FC}};
inline constexpr std::pair<const char*, CommConvention> kConventions[] = {
    {"representation_only", CommConvention::representation_only},
    {"representation_plus_label", CommConvention::representation_plus_label}};

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config key '" + where + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <typename T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

template <typename E, std::size_t N>
void read_enum(const json& j, const char* key, const std::string& where, const std::pair<const char*, E> (&table)[N],
               E& out) {
  if (!j.contains(key)) return;
  std::string v;
  read(j, key, where, v);
  out = parse_enum(where.empty() ? std::string(key) : where + "." + key, v, table);
}

inline void read_train(const json& j, const std::string& where, TrainOptions& t) {
  check_keys(j, where, {"lr", "batch_size", "epochs"});
  read(j, "lr", where, t.lr);
  read(j, "batch_size", where, t.batch_size);
  read(j, "epochs", where, t.epochs);
}

}  // namespace detail

inline void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError("config key '" + key + "': " + why); };
  if (cfg.dataset.kind != "blobs" && cfg.dataset.kind != "csv") fail("dataset.kind", "must be 'blobs' or 'csv'");
  if (cfg.dataset.kind == "csv" && cfg.dataset.path.empty()) fail("dataset.path", "required for csv datasets");
  if (cfg.dataset.kind == "blobs") {
    if (cfg.dataset.classes == 0) fail("dataset.classes", "must be positive");
    if (cfg.dataset.per_class == 0) fail("dataset.per_class", "must be positive");
    if (cfg.dataset.dim == 0) fail("dataset.dim", "must be positive");
    if (!(cfg.dataset.spread > 0.0)) fail("dataset.spread", "must be positive");
    if (!(cfg.dataset.separation >= 0.0)) fail("dataset.separation", "must be >= 0");
  }
  if (cfg.partition.mode != "PRA" && cfg.partition.mode != "PAT" && cfg.partition.mode != "LongTail")
    fail("partition.mode", "must be PRA, PAT or LongTail");
  if (!(cfg.partition.alpha > 0.0)) fail("partition.alpha", "must be positive");
  if (cfg.partition.categories_per_client == 0) fail("partition.categories_per_client", "must be positive");
  if (!(cfg.partition.imbalance_factor >= 1.0)) fail("partition.imbalance_factor", "must be >= 1");
  if (cfg.num_clients == 0) fail("num_clients", "must be positive");
  if (!(cfg.participation_rate > 0.0 && cfg.participation_rate <= 1.0)) fail("participation_rate", "must be in (0, 1]");
  if (cfg.unified_dim == 0) fail("unified_dim", "must be positive");
  if (!cfg.architectures.empty()) {
    if (cfg.architectures.size() != cfg.num_clients)
      fail("architectures", std::to_string(cfg.architectures.size()) + " architectures listed for " +
                                std::to_string(cfg.num_clients) + " clients");
    for (std::size_t k = 0; k < cfg.architectures.size(); ++k) {
      const auto& a = cfg.architectures[k];
      const std::string key = "architectures[" + std::to_string(k) + "]";
      if (a.empty()) fail(key, "needs at least one layer width");
      for (std::size_t w : a)
        if (w == 0) fail(key, "layer widths must be positive");
      if (cfg.rm != RmOp::FC && a.back() % cfg.unified_dim != 0)
        fail(key, "output width " + std::to_string(a.back()) + " is not a multiple of unified_dim " +
                      std::to_string(cfg.unified_dim) + " required by " + std::string(to_string(cfg.rm)));
    }
  }
  if (!(cfg.client.lr >= 0.0)) fail("client.lr", "must be >= 0");
  if (!(cfg.server.lr >= 0.0)) fail("server.lr", "must be >= 0");
  if (cfg.client.batch_size == 0) fail("client.batch_size", "must be positive");
  if (cfg.server.batch_size == 0) fail("server.batch_size", "must be positive");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction <= 1.0)) fail("train_fraction", "must be in (0, 1]");
  if (!(cfg.proto_lambda >= 0.0)) fail("strategy.proto_lambda", "must be >= 0");
  if (cfg.seeds.empty()) fail("seeds", "need at least one seed");
  if (!(cfg.privacy.lr > 0.0)) fail("privacy.lr", "must be positive");
  if (!(cfg.privacy.data_range >= 0.0)) fail("privacy.data_range", "must be >= 0");
}

// Fills per-client architectures when none are given.
inline ExperimentConfig with_defaults(ExperimentConfig cfg) {
  if (cfg.architectures.empty())
    for (std::size_t k = 0; k < cfg.num_clients; ++k) cfg.architectures.push_back(default_architecture(k, cfg.unified_dim));
  return cfg;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  ExperimentConfig cfg;
  detail::check_keys(j, "",
                     {"dataset", "partition", "num_clients", "participation_rate", "rounds", "strategy", "rm",
                      "unified_dim", "architectures", "client", "server", "train_fraction", "comm_convention", "seeds",
                      "output", "privacy"});
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    detail::check_keys(d, "dataset", {"kind", "classes", "per_class", "dim", "spread", "separation", "path"});
    read(d, "kind", "dataset", cfg.dataset.kind);
    read(d, "classes", "dataset", cfg.dataset.classes);
    read(d, "per_class", "dataset", cfg.dataset.per_class);
    read(d, "dim", "dataset", cfg.dataset.dim);
    read(d, "spread", "dataset", cfg.dataset.spread);
    read(d, "separation", "dataset", cfg.dataset.separation);
    read(d, "path", "dataset", cfg.dataset.path);
  }
  if (j.contains("partition")) {
    const auto& p = j["partition"];
    detail::check_keys(p, "partition", {"mode", "alpha", "categories_per_client", "imbalance_factor"});
    read(p, "mode", "partition", cfg.partition.mode);
    read(p, "alpha", "partition", cfg.partition.alpha);
    read(p, "categories_per_client", "partition", cfg.partition.categories_per_client);
    read(p, "imbalance_factor", "partition", cfg.partition.imbalance_factor);
  }
  read(j, "num_clients", "", cfg.num_clients);
  read(j, "participation_rate", "", cfg.participation_rate);
  read(j, "rounds", "", cfg.rounds);
  if (j.contains("strategy")) {
    const auto& s = j["strategy"];
    detail::check_keys(s, "strategy", {"kind", "sampling", "mechanism", "distribution", "proto_lambda"});
    detail::read_enum(s, "kind", "strategy", detail::kStrategies, cfg.strategy);
    detail::read_enum(s, "sampling", "strategy", detail::kSamplings, cfg.sampling);
    detail::read_enum(s, "mechanism", "strategy", detail::kMechanisms, cfg.mechanism);
    detail::read_enum(s, "distribution", "strategy", detail::kDistributions, cfg.distribution);
    read(s, "proto_lambda", "strategy", cfg.proto_lambda);
  }
  detail::read_enum(j, "rm", "", detail::kRmOps, cfg.rm);
  read(j, "unified_dim", "", cfg.unified_dim);
  read(j, "architectures", "", cfg.architectures);
  if (j.contains("client")) detail::read_train(j["client"], "client", cfg.client);
  if (j.contains("server")) detail::read_train(j["server"], "server", cfg.server);
  read(j, "train_fraction", "", cfg.train_fraction);
  detail::read_enum(j, "comm_convention", "", detail::kConventions, cfg.comm);
  read(j, "seeds", "", cfg.seeds);
  read(j, "output", "", cfg.output);
  if (j.contains("privacy")) {
    const auto& p = j["privacy"];
    detail::check_keys(p, "privacy", {"steps", "lr", "init_stddev", "max_restarts", "data_range"});
    read(p, "steps", "privacy", cfg.privacy.steps);
    read(p, "lr", "privacy", cfg.privacy.lr);
    read(p, "init_stddev", "privacy", cfg.privacy.init_stddev);
    read(p, "max_restarts", "privacy", cfg.privacy.max_restarts);
    read(p, "data_range", "privacy", cfg.privacy.data_range);
  }
  validate(cfg);
  return with_defaults(std::move(cfg));
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  using detail::enum_name;
  nlohmann::json j;
  j["dataset"] = {{"kind", cfg.dataset.kind},       {"classes", cfg.dataset.classes}, {"per_class", cfg.dataset.per_class},
                  {"dim", cfg.dataset.dim},         {"spread", cfg.dataset.spread},   {"separation", cfg.dataset.separation},
                  {"path", cfg.dataset.path}};
  j["partition"] = {{"mode", cfg.partition.mode},
                    {"alpha", cfg.partition.alpha},
                    {"categories_per_client", cfg.partition.categories_per_client},
                    {"imbalance_factor", cfg.partition.imbalance_factor}};
  j["num_clients"] = cfg.num_clients;
  j["participation_rate"] = cfg.participation_rate;
  j["rounds"] = cfg.rounds;
  j["strategy"] = {{"kind", enum_name(cfg.strategy, detail::kStrategies)},
                   {"sampling", enum_name(cfg.sampling, detail::kSamplings)},
                   {"mechanism", enum_name(cfg.mechanism, detail::kMechanisms)},
                   {"distribution", enum_name(cfg.distribution, detail::kDistributions)},
                   {"proto_lambda", cfg.proto_lambda}};
  j["rm"] = enum_name(cfg.rm, detail::kRmOps);
  j["unified_dim"] = cfg.unified_dim;
  j["architectures"] = cfg.architectures;
  j["client"] = {{"lr", cfg.client.lr}, {"batch_size", cfg.client.batch_size}, {"epochs", cfg.client.epochs}};
  j["server"] = {{"lr", cfg.server.lr}, {"batch_size", cfg.server.batch_size}, {"epochs", cfg.server.epochs}};
  j["train_fraction"] = cfg.train_fraction;
  j["comm_convention"] = enum_name(cfg.comm, detail::kConventions);
  j["seeds"] = cfg.seeds;
  j["output"] = cfg.output;
  j["privacy"] = {{"steps", cfg.privacy.steps},
                  {"lr", cfg.privacy.lr},
                  {"init_stddev", cfg.privacy.init_stddev},
                  {"max_restarts", cfg.privacy.max_restarts},
                  {"data_range", cfg.privacy.data_range}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Building and running

inline Strategy strategy_of(const ExperimentConfig& cfg) {
  return Strategy{cfg.strategy, ReMechanism{cfg.mechanism, cfg.distribution}, cfg.sampling, cfg.proto_lambda};
}

inline data::Dataset load_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.dataset.kind == "csv") return data::read_csv(cfg.dataset.path);
  return data::make_blobs(cfg.dataset.classes, cfg.dataset.per_class, cfg.dataset.dim, cfg.dataset.spread,
                          derive_seed(seed, 1), cfg.dataset.separation);
}

inline data::PartitionSpec partition_spec(const ExperimentConfig& cfg, std::uint64_t seed) {
  data::PartitionSpec spec;
  spec.num_clients = cfg.num_clients;
  spec.seed = derive_seed(seed, 2);
  if (cfg.partition.mode == "PAT")
    spec.mode = data::Pat{cfg.partition.categories_per_client};
  else if (cfg.partition.mode == "LongTail")
    spec.mode = data::LongTail{cfg.partition.imbalance_factor, cfg.partition.alpha};
  else
    spec.mode = data::Pra{cfg.partition.alpha};
  return spec;
}

// Everything random in a run derives from `seed`: data, partition, splits,
// initial weights and every client/server stream.
inline Federation build_federation(const ExperimentConfig& raw_cfg, std::uint64_t seed) {
  validate(raw_cfg);
  const ExperimentConfig cfg = with_defaults(raw_cfg);
  const data::Dataset ds = load_dataset(cfg, seed);
  const auto parts = data::partition(ds, partition_spec(cfg, seed));
  const std::size_t C = ds.num_classes, d = cfg.unified_dim;

  Federation fed;
  fed.strategy = strategy_of(cfg);
  fed.ledger.convention = cfg.comm;
  fed.participation_rate = cfg.participation_rate;
  fed.round_rng.seed(derive_seed(seed, 5));
  Rng init(derive_seed(seed, 3));
  fed.server.classifier = nn::DenseNet::glorot({d, C}, nn::Activation::identity, nn::Activation::identity, init);
  fed.server.options = cfg.server;
  fed.server.rng.seed(derive_seed(seed, 4));

  for (std::size_t k = 0; k < cfg.num_clients; ++k) {
    ClientState c;
    c.id = k;
    auto split = data::train_test_split(parts[k], cfg.train_fraction, derive_seed(seed, 100 + k));
    c.train = std::move(split.train);
    c.test = std::move(split.test);
    Rng client_init(derive_seed(seed, 1000 + k));
    std::vector<std::size_t> dims{ds.dim};
    dims.insert(dims.end(), cfg.architectures[k].begin(), cfg.architectures[k].end());
    c.extractor = nn::DenseNet::glorot(dims, nn::Activation::relu, nn::Activation::relu, client_init);
    c.rm.op = cfg.rm;
    c.rm.dim = d;
    if (cfg.rm == RmOp::FC)
      c.rm.fc = nn::DenseNet::glorot({dims.back(), d}, nn::Activation::identity, nn::Activation::identity, client_init);
    c.classifier = fed.server.classifier;
    c.rng.seed(derive_seed(seed, 2000 + k));
    c.options = cfg.client;
    c.validate();
    fed.clients.push_back(std::move(c));
  }
  return fed;
}

struct SeedRun {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double initial_acc = 0.0;
  double final_acc = 0.0;
  std::vector<RoundMetrics> rounds;
  CommLedger ledger;
};

struct RunSummary {
  std::vector<SeedRun> runs;
  double mean_final_acc = 0.0;
  double std_final_acc = 0.0;  // population std over successful seeds
  RoundComm ledger_totals;     // summed over successful seeds
};

inline SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  try {
    Federation fed = build_federation(cfg, seed);
    run.initial_acc = run.final_acc = evaluate(fed).mean_acc;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
      run.rounds.push_back(run_round(fed));
      run.final_acc = run.rounds.back().mean_acc;
    }
    run.ledger = fed.ledger;
  } catch (const std::exception& e) {
    run.failed = true;
    run.error = e.what();
  }
  return run;
}

inline RunSummary summarize(std::vector<SeedRun> runs) {
  RunSummary s;
  s.runs = std::move(runs);
  std::vector<double> finals;
  for (const auto& r : s.runs) {
    if (r.failed) continue;
    finals.push_back(r.final_acc);
    const auto t = r.ledger.totals();
    s.ledger_totals.upload += t.upload;
    s.ledger_totals.broadcast += t.broadcast;
  }
  if (!finals.empty()) {
    for (double v : finals) s.mean_final_acc += v;
    s.mean_final_acc /= static_cast<double>(finals.size());
    double var = 0.0;
    for (double v : finals) var += (v - s.mean_final_acc) * (v - s.mean_final_acc);
    s.std_final_acc = std::sqrt(var / static_cast<double>(finals.size()));
  }
  return s;
}

inline RunSummary run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<SeedRun> runs;
  for (std::uint64_t seed : cfg.seeds) runs.push_back(run_seed(cfg, seed));
  return summarize(std::move(runs));
}

// ---------------------------------------------------------------------------
// Export

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string jsonl_record(std::uint64_t seed, const RoundMetrics& m) {
  std::string s = "{\"seed\":" + std::to_string(seed) + ",\"round\":" + std::to_string(m.round) +
                  ",\"mean_acc\":" + fmt6(m.mean_acc) + ",\"per_client_acc\":[";
  for (std::size_t i = 0; i < m.per_client_acc.size(); ++i) s += (i ? "," : "") + fmt6(m.per_client_acc[i]);
  s += "],\"upload_scalars\":" + std::to_string(m.comm.upload) +
       ",\"broadcast_scalars\":" + std::to_string(m.comm.broadcast) + "}";
  return s;
}

enum class ExportFormat { jsonl, csv };

inline void export_summary(const RunSummary& summary, ExportFormat format, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  if (format == ExportFormat::csv) out << "seed,round,mean_acc,upload,broadcast\n";
  for (const auto& run : summary.runs) {
    if (run.failed) continue;
    for (const auto& m : run.rounds) {
      if (format == ExportFormat::jsonl)
        out << jsonl_record(run.seed, m) << '\n';
      else
        out << run.seed << ',' << m.round << ',' << fmt6(m.mean_acc) << ',' << m.comm.upload << ',' << m.comm.broadcast
            << '\n';
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path);
}

struct MetricsRow {
  std::uint64_t seed = 0;
  std::size_t round = 0;
  double mean_acc = 0.0;
  std::uint64_t upload = 0;
  std::uint64_t broadcast = 0;
};

inline std::vector<MetricsRow> import_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "seed,round,mean_acc,upload,broadcast")
    throw std::runtime_error(path + ": unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    char comma;
    std::istringstream ss(line);
    if (!(ss >> r.seed >> comma >> r.round >> comma >> r.mean_acc >> comma >> r.upload >> comma >> r.broadcast))
      throw std::runtime_error(path + ": malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Inversion study

struct AttackRecord {
  std::uint64_t seed = 0;
  std::size_t client = 0;
  InversionResult result;
};

inline double data_range(const data::Dataset& ds) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : ds.samples)
    for (double v : s.x) lo = std::min(lo, v), hi = std::max(hi, v);
  return hi > lo ? hi - lo : 1.0;
}

// Trains the configured federation, then attacks every client with its own
// extractor against three targets: one raw representation, one category
// prototype and one entangled packet. Each reconstruction is scored against
// the samples that fed that target.
inline std::vector<AttackRecord> run_inversion_study(const ExperimentConfig& cfg, std::uint64_t seed) {
  Federation fed = build_federation(cfg, seed);
  for (std::size_t t = 0; t < cfg.rounds; ++t) run_round(fed);

  data::Dataset all = fed.clients.front().train.empty_like();
  for (const auto& c : fed.clients) all.samples.insert(all.samples.end(), c.train.samples.begin(), c.train.samples.end());
  const double range = cfg.privacy.data_range > 0.0 ? cfg.privacy.data_range : data_range(all);

  const InversionOptions opts{cfg.privacy.steps, cfg.privacy.lr, cfg.privacy.init_stddev, cfg.privacy.max_restarts};
  const ReMechanism mech{cfg.mechanism, cfg.distribution};
  Rng rng(derive_seed(seed, 6));
  std::vector<AttackRecord> out;
  for (auto& c : fed.clients) {
    if (c.train.empty()) continue;
    const RepresentationSet mapped = client_representations(c);
    auto attack = [&](TargetKind kind, std::span<const double> target, std::vector<std::vector<double>> originals) {
      InversionResult r = invert(c.extractor, c.rm, target, opts, rng);
      r.target_kind = kind;
      const Score s = score(r.reconstructed, originals, range);
      r.mse = s.mse;
      r.psnr = s.psnr;
      out.push_back({seed, c.id, std::move(r)});
    };

    const auto i = std::uniform_int_distribution<std::size_t>(0, mapped.size() - 1)(rng);
    attack(TargetKind::raw, mapped.reps[i], {c.train.samples[i].x});

    const auto protos = prototypes_mapped(mapped.reps, mapped.labels, mapped.num_classes);
    const auto& proto = protos[std::uniform_int_distribution<std::size_t>(0, protos.size() - 1)(rng)];
    std::vector<std::vector<double>> members;
    for (const auto& s : c.train.samples)
      if (s.label == proto.category) members.push_back(s.x);
    attack(TargetKind::prototype, proto.center, std::move(members));

    const WeightVector w = re_weights(mapped, mech, rng);
    const auto packet = entangle_mapped(mapped.reps, mapped.labels, mapped.num_classes, w);
    std::vector<std::vector<double>> sources;
    for (std::size_t k = 0; k < w.size(); ++k)
      if (w[k] > 0.0) sources.push_back(c.train.samples[k].x);
    attack(TargetKind::entangled, packet.r_tilde, std::move(sources));
  }
  return out;
}

inline std::string jsonl_record(const AttackRecord& a) {
  return "{\"seed\":" + std::to_string(a.seed) + ",\"client\":" + std::to_string(a.client) + ",\"target_kind\":\"" +
         std::string(to_string(a.result.target_kind)) + "\",\"mse\":" + fmt6(a.result.mse) +
         ",\"psnr\":" + fmt6(a.result.psnr) + ",\"objective\":" + fmt6(a.result.objective) +
         ",\"iterations\":" + std::to_string(a.result.iterations) + "}";
}

}  // namespace fedre
