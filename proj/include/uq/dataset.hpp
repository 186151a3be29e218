#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uq/types.hpp"

namespace uq {

enum class Provenance { clean, noisy, fgsm, pgd };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct ImageSample {
  Image image;
  int label = 0;
  Provenance provenance = Provenance::clean;
  std::string source_id;
};

struct Dataset {
  std::vector<ImageSample> samples;
  int class_count = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  void validate() const;
};

struct SplitSpec {
  Scalar train_fraction = 0.875;
  Scalar val_fraction = 0.083;
  Scalar test_fraction = 0.042;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class NoiseKind { gaussian, salt_pepper };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  Scalar strength = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic shape-family generator: one visually distinct family per class
// (ellipse, rectangle, cross, annulus, ...) with jittered pose, scale and color.
Dataset generate_synthetic_dataset(int class_count, int per_class, int resolution,
                                   std::uint64_t seed);

struct DirectoryLoadResult {
  Dataset dataset;
  int skipped = 0;                       // undecodable files
  std::vector<std::string> warnings;     // one entry per skipped file
};

// Layout: <root>/<class_name>/*.png|jpg. Samples ordered lexicographically by path.
DirectoryLoadResult load_directory_dataset(const std::filesystem::path& root,
                                           const std::vector<std::string>& class_names,
                                           int resolution);

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

DatasetSplits split_dataset(const Dataset& d, const SplitSpec& spec);

ImageSample add_noise(const ImageSample& x, const NoiseSpec& spec);

// Writes PNGs in the directory layout above plus manifest.csv
// (source_id,class_index,class_name,provenance).
void export_dataset(const Dataset& d, const std::filesystem::path& root);

}  // namespace uq
