#include "uq/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "uq/image_io.hpp"
#include "uq/rng.hpp"

namespace uq {

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::clean: return "clean";
    case Provenance::noisy: return "noisy";
    case Provenance::fgsm: return "fgsm";
    case Provenance::pgd: return "pgd";
  }
  return "clean";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "clean") return Provenance::clean;
  if (s == "noisy") return Provenance::noisy;
  if (s == "fgsm") return Provenance::fgsm;
  if (s == "pgd") return Provenance::pgd;
  throw InvalidArgument("unknown provenance: " + s);
}

void Dataset::validate() const {
  if (static_cast<int>(class_names.size()) != class_count) {
    throw InvalidArgument("class_names length must equal class_count");
  }
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= class_count) {
      throw InvalidArgument("sample label out of range: " + s.source_id);
    }
    if (s.image.pix.minCoeff() < 0.0 || s.image.pix.maxCoeff() > 1.0) {
      throw InvalidArgument("pixel out of [0,1]: " + s.source_id);
    }
  }
}

void SplitSpec::validate() const {
  for (Scalar f : {train_fraction, val_fraction, test_fraction}) {
    if (!(f > 0.0 && f < 1.0)) {
      throw InvalidArgument("split fractions must lie in (0,1)");
    }
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw InvalidArgument("split fractions must sum to 1");
  }
}

void NoiseSpec::validate() const {
  if (strength < 0.0) {
    throw InvalidArgument("noise strength must be non-negative");
  }
  if (kind == NoiseKind::salt_pepper && strength > 1.0) {
    throw InvalidArgument("salt_pepper strength must be at most 1");
  }
}

namespace {

struct Pose {
  Scalar cx, cy;      // center in [0,1]^2
  Scalar scale;       // half-extent in [0,1] units
  Scalar angle;       // radians
  Scalar aspect;      // secondary-axis ratio
};

// Shape membership tests in pose-local coordinates (u,v scaled by extent).
bool inside_shape(int family, Scalar u, Scalar v, const Pose& p) {
  const Scalar a = 1.0;
  const Scalar b = p.aspect;
  switch (family % 8) {
    case 0:  // ellipse
      return u * u / (a * a) + v * v / (b * b) <= 1.0;
    case 1:  // rectangle
      return std::abs(u) <= a && std::abs(v) <= b;
    case 2:  // cross: two perpendicular bars
      return (std::abs(u) <= a && std::abs(v) <= 0.3 * b) ||
             (std::abs(v) <= b && std::abs(u) <= 0.3 * a);
    case 3: {  // annulus
      const Scalar r = std::sqrt(u * u + v * v);
      return r <= 1.0 && r >= 0.55;
    }
    case 4:  // triangle (upward)
      return v >= -b && std::abs(u) <= a * (b - v) / (2.0 * b);
    case 5:  // diamond
      return std::abs(u) / a + std::abs(v) / b <= 1.0;
    case 6: {  // two dots
      const Scalar d = 0.55;
      const Scalar r2a = (u - d) * (u - d) + v * v;
      const Scalar r2b = (u + d) * (u + d) + v * v;
      return r2a <= 0.16 || r2b <= 0.16;
    }
    case 7:  // stripes: three parallel bars
      return std::abs(v) <= b && std::fmod(std::abs(u * 3.0 / a), 2.0) < 1.0 &&
             std::abs(u) <= a;
  }
  return false;
}

const char* family_name(int family) {
  static const std::array<const char*, 8> names = {
      "ellipse", "rectangle", "cross", "annulus",
      "triangle", "diamond", "dots", "stripes"};
  return names[family % 8];
}

ImageSample render_sample(int family, int label, int index, int resolution, Rng& rng) {
  Pose pose;
  pose.cx = rng.uniform(0.40, 0.60);
  pose.cy = rng.uniform(0.40, 0.60);
  pose.scale = rng.uniform(0.20, 0.28);
  pose.angle = rng.uniform(0.0, 3.14159265358979);
  pose.aspect = rng.uniform(0.55, 0.9);

  Vector bg(3), fg(3);
  for (int c = 0; c < 3; ++c) bg(c) = rng.uniform(0.30, 0.44);
  for (int c = 0; c < 3; ++c) fg(c) = rng.uniform(0.56, 0.70);
  const Scalar gradient = rng.uniform(-0.06, 0.06);
  const Scalar texture = 0.012;

  // Class-discriminative interior banding: frequency steps with the family, so
  // the classifier has to pick up fine texture rather than outline alone. The
  // bands live in image coordinates, keeping the frequency classes separated
  // regardless of shape scale.
  static constexpr Scalar kBandFreqs[8] = {6.0, 11.0, 17.0, 24.0, 8.0, 14.0, 20.0, 28.0};
  const Scalar band_freq = kBandFreqs[family % 8];
  const Scalar band_phi = rng.uniform(0.0, 3.14159265358979);
  const Scalar band_phase = rng.uniform(0.0, 6.28318530717959);
  const Scalar band_cu = std::cos(band_phi), band_su = std::sin(band_phi);
  const Scalar band_amp = 0.5;

  const Scalar ca = std::cos(pose.angle), sa = std::sin(pose.angle);

  ImageSample s;
  s.image = Image(3, resolution, resolution);
  s.label = label;
  s.provenance = Provenance::clean;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d", family_name(family), index);
  s.source_id = buf;

  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      // 2x2 supersampled coverage for soft edges; banding is sampled at the
      // same points so the finest frequencies stay alias-free.
      Scalar cover = 0.0;
      Scalar band_sum = 0.0;
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const Scalar px = (x + 0.25 + 0.5 * sx) / resolution - pose.cx;
          const Scalar py = (y + 0.25 + 0.5 * sy) / resolution - pose.cy;
          const Scalar u = (ca * px + sa * py) / pose.scale;
          const Scalar v = (-sa * px + ca * py) / pose.scale;
          if (inside_shape(family, u, v, pose)) {
            cover += 0.25;
            const Scalar t = band_cu * px + band_su * py;
            band_sum +=
                0.25 * (0.5 + 0.5 * std::sin(6.28318530717959 * band_freq * t + band_phase));
          }
        }
      }
      const Scalar fg_mod = cover > 0.0 ? 1.0 - band_amp * band_sum / cover : 1.0;
      const Scalar shade = gradient * (static_cast<Scalar>(y) / resolution - 0.5);
      for (int c = 0; c < 3; ++c) {
        Scalar val = bg(c) + shade + (fg(c) * fg_mod - bg(c) - shade) * cover;
        val += rng.normal(0.0, texture);
        s.image.at(c, y, x) = std::clamp(val, 0.0, 1.0);
      }
    }
  }
  return s;
}

}  // namespace

Dataset generate_synthetic_dataset(int class_count, int per_class, int resolution,
                                   std::uint64_t seed) {
  if (class_count < 2) throw InvalidArgument("class_count must be at least 2");
  if (per_class < 1) throw InvalidArgument("per_class must be positive");
  if (resolution < 16) throw InvalidArgument("resolution must be at least 16");

  Dataset d;
  d.class_count = class_count;
  for (int c = 0; c < class_count; ++c) {
    std::string name = family_name(c);
    if (c >= 8) name += "_" + std::to_string(c / 8);
    d.class_names.push_back(name);
  }
  for (int c = 0; c < class_count; ++c) {
    for (int i = 0; i < per_class; ++i) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(c) * 0x100000u + i);
      d.samples.push_back(render_sample(c, c, i, resolution, rng));
    }
  }
  return d;
}

DirectoryLoadResult load_directory_dataset(const std::filesystem::path& root,
                                           const std::vector<std::string>& class_names,
                                           int resolution) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw IoError("dataset root does not exist: " + root.string());
  }
  DirectoryLoadResult result;
  result.dataset.class_count = static_cast<int>(class_names.size());
  result.dataset.class_names = class_names;

  for (int label = 0; label < static_cast<int>(class_names.size()); ++label) {
    const fs::path dir = root / class_names[label];
    if (!fs::is_directory(dir)) {
      throw IoError("missing class directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      auto img = load_image(file, resolution);
      if (!img) {
        ++result.skipped;
        result.warnings.push_back("undecodable image: " + file.string());
        continue;
      }
      ImageSample s;
      s.image = std::move(*img);
      s.label = label;
      s.provenance = Provenance::clean;
      s.source_id = class_names[label] + "/" + file.filename().string();
      result.dataset.samples.push_back(std::move(s));
    }
  }
  return result;
}

namespace {

// Largest-remainder apportionment of n into parts proportional to fractions.
std::vector<int> apportion(int n, const std::vector<Scalar>& fractions) {
  const int k = static_cast<int>(fractions.size());
  std::vector<int> counts(k);
  std::vector<std::pair<Scalar, int>> remainders;
  int assigned = 0;
  for (int i = 0; i < k; ++i) {
    const Scalar ideal = n * fractions[i];
    counts[i] = static_cast<int>(std::floor(ideal));
    assigned += counts[i];
    remainders.emplace_back(ideal - counts[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < n - assigned; ++i) {
    counts[remainders[i % k].second]++;
  }
  return counts;
}

}  // namespace

DatasetSplits split_dataset(const Dataset& d, const SplitSpec& spec) {
  spec.validate();
  d.validate();
  if (d.empty()) throw InvalidArgument("cannot split an empty dataset");

  const std::vector<Scalar> fractions = {spec.train_fraction, spec.val_fraction,
                                         spec.test_fraction};
  const int n = static_cast<int>(d.size());

  // Split totals first, then per-class counts constrained to those totals;
  // per (class, split) cell ends up at floor or floor+1 of its ideal share.
  std::vector<int> totals = apportion(n, fractions);
  for (int s = 0; s < 3; ++s) {
    if (totals[s] == 0) {
      throw InvalidArgument("fraction-too-small: split " + std::to_string(s) +
                            " would receive zero samples");
    }
  }

  std::vector<std::vector<int>> by_class(d.class_count);
  for (int i = 0; i < n; ++i) {
    by_class[d.samples[i].label].push_back(i);
  }

  // cell counts: floors, then leftovers by largest remainder subject to capacity
  std::vector<std::array<int, 3>> cell(d.class_count, {0, 0, 0});
  std::vector<int> class_left(d.class_count);
  std::vector<int> split_left = totals;
  std::vector<std::tuple<Scalar, int, int>> cells;  // (remainder, class, split)
  for (int c = 0; c < d.class_count; ++c) {
    const int nc = static_cast<int>(by_class[c].size());
    class_left[c] = nc;
    for (int s = 0; s < 3; ++s) {
      const Scalar ideal = nc * fractions[s];
      cell[c][s] = static_cast<int>(std::floor(ideal));
      class_left[c] -= cell[c][s];
      split_left[s] -= cell[c][s];
      cells.emplace_back(ideal - cell[c][s], c, s);
    }
  }
  std::stable_sort(cells.begin(), cells.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  bool progress = true;
  while (progress) {
    progress = false;
    for (const auto& [rem, c, s] : cells) {
      if (class_left[c] > 0 && split_left[s] > 0 && cell[c][s] == static_cast<int>(
              std::floor(static_cast<int>(by_class[c].size()) * fractions[s]))) {
        cell[c][s]++;
        class_left[c]--;
        split_left[s]--;
        progress = true;
      }
    }
    if (!progress && std::accumulate(class_left.begin(), class_left.end(), 0) > 0) {
      // capacity fallback: any feasible cell
      for (const auto& [rem, c, s] : cells) {
        if (class_left[c] > 0 && split_left[s] > 0) {
          cell[c][s]++;
          class_left[c]--;
          split_left[s]--;
          progress = true;
          break;
        }
      }
      if (!progress) break;
    }
  }

  DatasetSplits out;
  for (Dataset* part : {&out.train, &out.val, &out.test}) {
    part->class_count = d.class_count;
    part->class_names = d.class_names;
  }
  for (int c = 0; c < d.class_count; ++c) {
    auto indices = by_class[c];
    Rng rng = Rng::stream(spec.seed, static_cast<std::uint64_t>(c));
    rng.shuffle(indices);
    std::array<std::vector<int>, 3> chosen;
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < cell[c][s]; ++i) chosen[s].push_back(indices[pos++]);
    }
    Dataset* parts[3] = {&out.train, &out.val, &out.test};
    for (int s = 0; s < 3; ++s) {
      std::sort(chosen[s].begin(), chosen[s].end());
      for (int idx : chosen[s]) parts[s]->samples.push_back(d.samples[idx]);
    }
  }
  return out;
}

ImageSample add_noise(const ImageSample& x, const NoiseSpec& spec) {
  spec.validate();
  ImageSample out = x;
  out.provenance = Provenance::noisy;
  Rng rng(spec.seed);

  if (spec.kind == NoiseKind::gaussian) {
    for (int c = 0; c < out.image.channels; ++c) {
      for (int i = 0; i < out.image.pix.cols(); ++i) {
        out.image.pix(c, i) =
            std::clamp(out.image.pix(c, i) + rng.normal(0.0, spec.strength), 0.0, 1.0);
      }
    }
  } else {
    const int total = out.image.height * out.image.width;
    const int flips = static_cast<int>(std::lround(spec.strength * total));
    std::vector<int> positions(total);
    std::iota(positions.begin(), positions.end(), 0);
    rng.shuffle(positions);
    for (int i = 0; i < flips; ++i) {
      const Scalar value = rng.bernoulli(0.5) ? 1.0 : 0.0;
      for (int c = 0; c < out.image.channels; ++c) {
        out.image.pix(c, positions[i]) = value;
      }
    }
  }
  return out;
}

void export_dataset(const Dataset& d, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root);
  std::ofstream manifest(root / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest under " + root.string());
  manifest << "source_id,class_index,class_name,provenance\n";
  for (const auto& name : d.class_names) {
    fs::create_directories(root / name);
  }
  std::map<std::string, int> used;
  for (const auto& s : d.samples) {
    std::string stem = s.source_id;
    std::replace(stem.begin(), stem.end(), '/', '_');
    if (int n = used[stem]++; n > 0) stem += "_" + std::to_string(n);
    const fs::path file = root / d.class_names[s.label] / (stem + ".png");
    save_png(s.image, file);
    manifest << s.source_id << ',' << s.label << ',' << d.class_names[s.label] << ','
             << to_string(s.provenance) << '\n';
  }
}

}  // namespace uq
