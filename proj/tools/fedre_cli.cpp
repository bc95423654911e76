// fedre_cli: run, sweep, attack and validate federated experiments from a JSON config.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fedre/experiment.hpp"

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw fedre::ConfigError(path + ": " + e.what());
  }
  return j;
}

// FEDRE_OUTPUT_DIR, when set, redirects every output file into that directory.
std::string resolve_output(const std::string& path) {
  if (path.empty()) return path;
  if (const char* dir = std::getenv("FEDRE_OUTPUT_DIR"); dir && *dir) {
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / std::filesystem::path(path).filename()).string();
  }
  return path;
}

fedre::ExportFormat format_of(const std::string& name) {
  return name == "csv" ? fedre::ExportFormat::csv : fedre::ExportFormat::jsonl;
}

void print_summary(const std::string& label, const fedre::RunSummary& s) {
  std::printf("%s mean_acc=%.4f std=%.4f upload=%llu broadcast=%llu\n", label.c_str(), s.mean_final_acc,
              s.std_final_acc, static_cast<unsigned long long>(s.ledger_totals.upload),
              static_cast<unsigned long long>(s.ledger_totals.broadcast));
  for (const auto& r : s.runs) {
    if (r.failed)
      std::printf("  seed %llu FAILED: %s\n", static_cast<unsigned long long>(r.seed), r.error.c_str());
    else
      std::printf("  seed %llu final_acc=%.4f initial_acc=%.4f\n", static_cast<unsigned long long>(r.seed), r.final_acc,
                  r.initial_acc);
  }
}

void set_path(json& j, const std::string& dotted, const json& value) {
  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entangled-representation federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, format = "jsonl", output;

  auto* run = app.add_subcommand("run", "Run every seed of an experiment and export per-round metrics");
  run->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("--format", format, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));
  run->add_option("--output", output, "Metrics file (overrides the config's output)");

  std::string sweep_key;
  std::vector<std::string> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "Run the experiment once per value of one config key");
  sweep->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  sweep->add_option("--key", sweep_key, "Dotted config path, e.g. partition.alpha")->required();
  sweep->add_option("--values", sweep_values, "Values (JSON literals or bare strings)")->required();
  sweep->add_option("--format", format, "jsonl or csv")->check(CLI::IsMember({"jsonl", "csv"}));

  auto* inv = app.add_subcommand("invert", "Train, then run the representation inversion study");
  inv->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);
  inv->add_option("--output", output, "JSON-lines file for attack records");

  auto* val = app.add_subcommand("validate", "Parse and check a config, printing it with defaults filled in");
  val->add_option("config", config_path, "JSON config")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*val) {
      const auto cfg = fedre::load_config(config_path);
      std::cout << fedre::config_to_json(cfg).dump(2) << '\n';
      return 0;
    }

    if (*run) {
      const auto cfg = fedre::load_config(config_path);
      const auto summary = fedre::run_experiment(cfg);
      print_summary(std::string(fedre::to_string(cfg.strategy)), summary);
      if (const auto path = resolve_output(output.empty() ? cfg.output : output); !path.empty())
        fedre::export_summary(summary, format_of(format), path);
      for (const auto& r : summary.runs)
        if (r.failed) return 2;
      return 0;
    }

    if (*sweep) {
      const json base = read_json(config_path);
      for (const auto& v : sweep_values) {
        json j = base;
        set_path(j, sweep_key, parse_value(v));
        const auto cfg = fedre::config_from_json(j);
        const auto summary = fedre::run_experiment(cfg);
        print_summary(sweep_key + "=" + v, summary);
        if (!cfg.output.empty()) {
          const std::filesystem::path p(cfg.output);
          const auto tagged = p.stem().string() + "_" + v + p.extension().string();
          fedre::export_summary(summary, format_of(format), resolve_output((p.parent_path() / tagged).string()));
        }
      }
      return 0;
    }

    if (*inv) {
      const auto cfg = fedre::load_config(config_path);
      std::map<fedre::TargetKind, std::pair<double, double>> sums;
      std::map<fedre::TargetKind, int> counts;
      std::ofstream out;
      if (const auto path = resolve_output(output); !path.empty()) {
        out.open(path);
        if (!out) throw std::runtime_error("cannot open " + path + " for writing");
      }
      for (auto seed : cfg.seeds) {
        for (const auto& rec : fedre::run_inversion_study(cfg, seed)) {
          if (out.is_open()) out << fedre::jsonl_record(rec) << '\n';
          sums[rec.result.target_kind].first += rec.result.mse;
          sums[rec.result.target_kind].second += rec.result.psnr;
          ++counts[rec.result.target_kind];
        }
      }
      for (const auto& [kind, s] : sums)
        std::printf("%-10s mean_mse=%.6g mean_psnr=%.4f n=%d\n", std::string(fedre::to_string(kind)).c_str(),
                    s.first / counts[kind], s.second / counts[kind], counts[kind]);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
