#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "uq/attacks.hpp"
#include "uq/classifier.hpp"
#include "uq/dataset.hpp"
#include "uq/mc_dropout.hpp"

namespace uq {

inline constexpr int kConfigVersion = 1;

struct DatasetConfig {
  std::string kind = "synthetic";  // or "directory"
  int class_count = 4;
  int per_class = 250;
  int resolution = 64;
  std::uint64_t seed = 7;
  std::filesystem::path root;                 // directory kind
  std::vector<std::string> class_names;       // directory kind
  SplitSpec split;

  bool operator==(const DatasetConfig&) const = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ArchConfig arch;
  std::uint64_t arch_seed = 0;
  TrainConfig train;
  MCConfig mc;
  std::vector<AttackConfig> attacks;
  std::vector<NoiseSpec> noise;
  std::vector<Scalar> thresholds;
  std::filesystem::path output_dir = "runs";
  bool export_images = false;

  // Throws InvalidArgument naming the offending field path.
  void validate() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);

// Dotted-path override, e.g. set_field(j, "train.epochs", "30"). The value is
// parsed as JSON when possible, otherwise taken as a string.
void set_field(nlohmann::json& j, const std::string& key, const std::string& value);

// Replace every section seed with a stream derived from one master seed.
void apply_master_seed(ExperimentConfig& cfg, std::uint64_t master);

}  // namespace uq
