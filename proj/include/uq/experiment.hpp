#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "uq/config.hpp"
#include "uq/evaluation.hpp"

namespace uq {

struct RunManifest {
  std::filesystem::path run_dir;
  nlohmann::json config;
  std::vector<std::string> artifacts;           // paths relative to run_dir
  std::map<std::string, Scalar> timings_sec;
  std::map<std::string, std::uint64_t> seeds;
  std::string started_at;
  bool complete = false;

  // Validation summary kept alongside the artifact list so a run is
  // interpretable from the manifest alone.
  nlohmann::json results;

  void write() const;  // run_dir/manifest.json
};

// Full pipeline: dataset -> split -> train -> clean/attack/noise evaluation ->
// trends and flagging. Everything lands in a fresh subdirectory of
// cfg.output_dir; a `latest` symlink points at it afterwards.
RunManifest run_experiment(const ExperimentConfig& cfg);

// One full run per value of the dotted config key `axis`, plus
// sweep_summary.csv (axis value, final train/val accuracy and loss).
std::vector<RunManifest> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                   const std::vector<nlohmann::json>& values);

// Builds the configured dataset (synthetic or directory ingestion).
Dataset build_dataset(const DatasetConfig& cfg);

void write_attacks_csv(const std::vector<AdversarialResult>& results,
                       const AttackConfig& cfg, const std::filesystem::path& path);

}  // namespace uq
