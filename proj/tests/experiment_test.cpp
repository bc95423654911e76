#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "fedre/experiment.hpp"

namespace fedre {
namespace {

using nlohmann::json;

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

ExperimentConfig small() {
  ExperimentConfig cfg;
  cfg.dataset.per_class = 40;
  cfg.num_clients = 3;
  cfg.rounds = 3;
  cfg.seeds = {0, 1};
  return with_defaults(cfg);
}

std::string error_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const auto cfg = small();
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
}

TEST(Config, NonDefaultValuesRoundTrip) {
  auto cfg = small();
  cfg.strategy = StrategyKind::FedProtoStyle;
  cfg.sampling = Sampling::FS;
  cfg.mechanism = ReKind::RSP;
  cfg.distribution = WeightDistribution::Laplace;
  cfg.rm = RmOp::FC;
  cfg.unified_dim = 4;
  cfg.architectures = {{5}, {7, 3}, {6}};
  cfg.partition.mode = "LongTail";
  cfg.comm = CommConvention::representation_plus_label;
  cfg.client = {0.1, 8, 2};
  cfg.privacy.steps = 17;
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
}

TEST(Config, EmptyObjectGetsDefaults) {
  const auto cfg = config_from_json(json::object());
  EXPECT_EQ(cfg.num_clients, 10u);
  EXPECT_EQ(cfg.architectures.size(), 10u);
  EXPECT_EQ(cfg.server, (TrainOptions{0.01, 10, 5}));
  EXPECT_EQ(cfg.client, (TrainOptions{0.05, 16, 1}));
  EXPECT_EQ(cfg.unified_dim, 8u);
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(error_of({{"rounds", 5}, {"bogus", 1}}).find("bogus"), std::string::npos);
  EXPECT_NE(error_of({{"dataset", {{"colour", 1}}}}).find("dataset.colour"), std::string::npos);
  EXPECT_NE(error_of({{"num_clients", 2}, {"architectures", {{8}, {8}, {8}}}}).find("architectures"), std::string::npos);
  EXPECT_NE(error_of({{"architectures", {{12}}}, {"num_clients", 1}}).find("architectures[0]"), std::string::npos);
  EXPECT_NE(error_of({{"strategy", {{"kind", "FedAvg"}}}}).find("strategy.kind"), std::string::npos);
  EXPECT_NE(error_of({{"partition", {{"alpha", -1}}}}).find("partition.alpha"), std::string::npos);
  EXPECT_NE(error_of({{"participation_rate", 0}}).find("participation_rate"), std::string::npos);
  EXPECT_NE(error_of({{"rounds", "ten"}}).find("rounds"), std::string::npos);
  EXPECT_NE(error_of({{"seeds", json::array()}}).find("seeds"), std::string::npos);
}

TEST(Config, LoadRejectsMalformedJson) {
  const auto path = temp_path("fedre_bad_config.json");
  std::ofstream(path) << "{\"rounds\": ";
  EXPECT_THROW(load_config(path), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), std::runtime_error);
}

TEST(BuildFederation, SharedClassifierAndHeterogeneousExtractors) {
  const auto fed = build_federation(small(), 3);
  ASSERT_EQ(fed.clients.size(), 3u);
  for (const auto& c : fed.clients) {
    EXPECT_EQ(c.classifier, fed.server.classifier);
    EXPECT_EQ(c.classifier.num_layers(), 1u);
  }
  EXPECT_NE(fed.clients[0].extractor.output_dim(), fed.clients[1].extractor.output_dim());
}

TEST(RunExperiment, ReplayIsBitwiseIdentical) {
  const auto cfg = small();
  const auto a = run_experiment(cfg), b = run_experiment(cfg);
  ASSERT_EQ(a.runs.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    ASSERT_EQ(a.runs[s].rounds.size(), cfg.rounds);
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
      EXPECT_EQ(jsonl_record(0, a.runs[s].rounds[t]), jsonl_record(0, b.runs[s].rounds[t]));
      EXPECT_EQ(a.runs[s].rounds[t].per_client_acc, b.runs[s].rounds[t].per_client_acc);
    }
    EXPECT_EQ(a.runs[s].ledger, b.runs[s].ledger);
  }
  EXPECT_EQ(a.mean_final_acc, b.mean_final_acc);
}

TEST(RunExperiment, SummaryStatistics) {
  std::vector<SeedRun> runs(3);
  runs[0].final_acc = 0.5;
  runs[1].final_acc = 0.7;
  runs[2].failed = true;
  runs[2].final_acc = 100.0;
  const auto s = summarize(runs);
  EXPECT_DOUBLE_EQ(s.mean_final_acc, 0.6);
  EXPECT_NEAR(s.std_final_acc, 0.1, 1e-15);
}

TEST(RunExperiment, DivergenceIsRecordedPerSeed) {
  auto cfg = small();
  cfg.client.lr = 1e300;
  const auto s = run_experiment(cfg);
  for (const auto& r : s.runs) {
    EXPECT_TRUE(r.failed);
    EXPECT_NE(r.error.find("diverged"), std::string::npos);
  }
}

TEST(Export, JsonlRecordShape) {
  RoundMetrics m;
  m.round = 4;
  m.mean_acc = 2.0 / 3.0;
  m.per_client_acc = {0.5, 1.0};
  m.comm = {16, 36};
  const auto line = jsonl_record(7, m);
  EXPECT_EQ(line,
            "{\"seed\":7,\"round\":4,\"mean_acc\":0.666667,\"per_client_acc\":[0.5,1],\"upload_scalars\":16,"
            "\"broadcast_scalars\":36}");
  const auto j = json::parse(line);
  EXPECT_EQ(j["per_client_acc"].size(), 2u);
}

TEST(Export, CsvRoundTripAtSixSignificantDigits) {
  const auto cfg = small();
  const auto summary = run_experiment(cfg);
  const auto path = temp_path("fedre_metrics.csv");
  export_summary(summary, ExportFormat::csv, path);
  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "seed,round,mean_acc,upload,broadcast");
  }
  const auto rows = import_metrics_csv(path);
  ASSERT_EQ(rows.size(), cfg.seeds.size() * cfg.rounds);
  std::size_t i = 0;
  for (const auto& run : summary.runs)
    for (const auto& m : run.rounds) {
      const auto& r = rows[i++];
      EXPECT_EQ(r.seed, run.seed);
      EXPECT_EQ(r.round, m.round);
      EXPECT_NEAR(r.mean_acc, m.mean_acc, 5e-6 * std::max(1e-300, std::abs(m.mean_acc)));
      EXPECT_EQ(r.upload, m.comm.upload);
      EXPECT_EQ(r.broadcast, m.comm.broadcast);
    }
  std::filesystem::remove(path);
}

TEST(Export, JsonlFileHasOneRecordPerRound) {
  const auto cfg = small();
  const auto summary = run_experiment(cfg);
  const auto path = temp_path("fedre_metrics.jsonl");
  export_summary(summary, ExportFormat::jsonl, path);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    for (const char* key : {"round", "mean_acc", "per_client_acc", "upload_scalars", "broadcast_scalars"})
      EXPECT_TRUE(j.contains(key)) << key;
    ++n;
  }
  EXPECT_EQ(n, cfg.seeds.size() * cfg.rounds);
  std::filesystem::remove(path);
}

TEST(Export, Fmt6) {
  EXPECT_EQ(fmt6(0.123456789), "0.123457");
  EXPECT_EQ(fmt6(1.0), "1");
  EXPECT_EQ(fmt6(123456789.0), "1.23457e+08");
}

TEST(InversionStudy, ProducesThreeScoredTargetsPerClient) {
  auto cfg = small();
  cfg.rounds = 2;
  cfg.privacy.steps = 30;
  const auto recs = run_inversion_study(cfg, 0);
  ASSERT_EQ(recs.size(), 3u * cfg.num_clients);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].result.target_kind, static_cast<TargetKind>(i % 3));
    EXPECT_GE(recs[i].result.mse, 0.0);
    EXPECT_TRUE(std::isfinite(recs[i].result.psnr));
    EXPECT_NO_THROW(json::parse(jsonl_record(recs[i])));
  }
  const auto again = run_inversion_study(cfg, 0);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(recs[i].result.mse, again[i].result.mse);
}

}  // namespace
}  // namespace fedre
