#pragma once

#include <cfct/eval.hpp>
#include <cfct/ingest.hpp>
#include <cfct/trainer.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cfct {

struct ExperimentConfig {
  std::string dataset_path;
  InputFormat format = InputFormat::Tsv4;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 2024;
  HyperParams hp;
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;
  std::string out_dir = "runs";
  bool parallel = false;
  std::size_t threads = 0;
  std::vector<std::size_t> sweep_M;
  std::vector<double> sweep_alpha;

  // Structural checks only; the dataset path is checked when the run starts.
  void validate() const;
};

// Parses the JSON document; unknown keys are rejected. Missing keys keep their defaults.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_json(const ExperimentConfig& config);

// Loads and splits the dataset named by the config; a missing file is a UsageError that
// names the path.
InteractionDataset load_dataset(const ExperimentConfig& config);

struct RunOutcome {
  std::filesystem::path run_dir;
  RankingReport metrics;
  TrainReport train;
};

// Trains, evaluates, and writes
// <out_dir>/<run-id>/{checkpoint.bin, train.jsonl, metrics.csv, metrics.json, run_manifest.json}.
RunOutcome run_experiment(const ExperimentConfig& config, const InteractionDataset& data);
RunOutcome run_experiment(const ExperimentConfig& config);

// One run per (M, alpha) grid point, rows appended to <out_dir>/sweep.csv
// (M,alpha,metric,K,value) as each point finishes.
std::vector<RunOutcome> run_sweep(const ExperimentConfig& config);

// Timestamp plus a short hash of the resolved config.
std::string make_run_id(const ExperimentConfig& config);

} // namespace cfct
