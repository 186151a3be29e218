#include "uq/config.hpp"

#include <fstream>

namespace uq {

namespace {

template <typename Fn>
void check(const std::string& field, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    throw InvalidArgument(field + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  check("dataset", [&] {
    if (dataset.kind != "synthetic" && dataset.kind != "directory") {
      throw InvalidArgument("kind must be 'synthetic' or 'directory'");
    }
    if (dataset.kind == "synthetic") {
      if (dataset.class_count < 2) throw InvalidArgument("class_count must be >= 2");
      if (dataset.per_class < 1) throw InvalidArgument("per_class must be >= 1");
      if (dataset.resolution < 16) throw InvalidArgument("resolution must be >= 16");
    } else {
      if (dataset.root.empty()) throw InvalidArgument("root required for directory kind");
      if (dataset.class_names.empty()) throw InvalidArgument("class_names required");
    }
  });
  check("dataset.split", [&] { dataset.split.validate(); });
  check("arch", [&] { arch.validate(); });
  check("train", [&] { train.validate(); });
  check("mc", [&] { mc.validate(); });
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    check("attacks[" + std::to_string(i) + "]", [&] { attacks[i].validate(); });
  }
  for (std::size_t i = 0; i < noise.size(); ++i) {
    check("noise[" + std::to_string(i) + "]", [&] { noise[i].validate(); });
  }
  for (Scalar t : thresholds) {
    if (t < 0.0) throw InvalidArgument("thresholds: must be non-negative");
  }
  if (output_dir.empty()) throw InvalidArgument("output_dir: must not be empty");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return to_json(a) == to_json(b);
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["version"] = kConfigVersion;
  j["dataset"] = {{"kind", cfg.dataset.kind},
                  {"class_count", cfg.dataset.class_count},
                  {"per_class", cfg.dataset.per_class},
                  {"resolution", cfg.dataset.resolution},
                  {"seed", cfg.dataset.seed},
                  {"root", cfg.dataset.root.string()},
                  {"class_names", cfg.dataset.class_names},
                  {"split",
                   {{"train", cfg.dataset.split.train_fraction},
                    {"val", cfg.dataset.split.val_fraction},
                    {"test", cfg.dataset.split.test_fraction},
                    {"seed", cfg.dataset.split.seed}}}};
  j["arch"] = {{"backbone", to_string(cfg.arch.backbone)},
               {"block_count", cfg.arch.block_count},
               {"class_count", cfg.arch.class_count},
               {"drop_rate", cfg.arch.drop_rate},
               {"unfrozen_blocks",
                std::vector<int>(cfg.arch.unfrozen_blocks.begin(),
                                 cfg.arch.unfrozen_blocks.end())},
               {"input_resolution", cfg.arch.input_resolution},
               {"base_width", cfg.arch.base_width},
               {"seed", cfg.arch_seed}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"learning_rate", cfg.train.learning_rate},
                {"seed", cfg.train.seed},
                {"optimizer", cfg.train.optimizer}};
  j["mc"] = {{"passes", cfg.mc.passes},
             {"seed", cfg.mc.seed},
             {"aggregation", to_string(cfg.mc.aggregation)},
             {"score_space", to_string(cfg.mc.score_space)}};
  j["attacks"] = nlohmann::json::array();
  for (const auto& a : cfg.attacks) {
    j["attacks"].push_back({{"kind", to_string(a.kind)},
                            {"epsilon", a.epsilon},
                            {"alpha", a.pgd_step},
                            {"iters", a.pgd_iters},
                            {"random_start", a.random_start},
                            {"seed", a.seed}});
  }
  j["noise"] = nlohmann::json::array();
  for (const auto& n : cfg.noise) {
    j["noise"].push_back(
        {{"kind", n.kind == NoiseKind::gaussian ? "gaussian" : "salt_pepper"},
         {"strength", n.strength},
         {"seed", n.seed}});
  }
  j["thresholds"] = cfg.thresholds;
  j["output_dir"] = cfg.output_dir.string();
  j["export_images"] = cfg.export_images;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (j.contains("version") && j.at("version").get<int>() != kConfigVersion) {
    throw FormatError("config version " + j.at("version").dump() +
                      " does not match supported version " +
                      std::to_string(kConfigVersion));
  }
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    cfg.dataset.kind = d.value("kind", cfg.dataset.kind);
    cfg.dataset.class_count = d.value("class_count", cfg.dataset.class_count);
    cfg.dataset.per_class = d.value("per_class", cfg.dataset.per_class);
    cfg.dataset.resolution = d.value("resolution", cfg.dataset.resolution);
    cfg.dataset.seed = d.value("seed", cfg.dataset.seed);
    cfg.dataset.root = d.value("root", std::string());
    cfg.dataset.class_names =
        d.value("class_names", std::vector<std::string>());
    if (d.contains("split")) {
      const auto& s = d.at("split");
      cfg.dataset.split.train_fraction = s.value("train", cfg.dataset.split.train_fraction);
      cfg.dataset.split.val_fraction = s.value("val", cfg.dataset.split.val_fraction);
      cfg.dataset.split.test_fraction = s.value("test", cfg.dataset.split.test_fraction);
      cfg.dataset.split.seed = s.value("seed", cfg.dataset.split.seed);
    }
  }
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    cfg.arch.backbone = backbone_from_string(a.value("backbone", std::string("small_cnn")));
    cfg.arch.block_count = a.value("block_count", cfg.arch.block_count);
    cfg.arch.class_count = a.value("class_count", cfg.arch.class_count);
    cfg.arch.drop_rate = a.value("drop_rate", cfg.arch.drop_rate);
    if (a.contains("unfrozen_blocks")) {
      cfg.arch.unfrozen_blocks.clear();
      for (int b : a.at("unfrozen_blocks").get<std::vector<int>>()) {
        cfg.arch.unfrozen_blocks.insert(b);
      }
    }
    cfg.arch.input_resolution = a.value("input_resolution", cfg.dataset.resolution);
    cfg.arch.base_width = a.value("base_width", cfg.arch.base_width);
    cfg.arch_seed = a.value("seed", cfg.arch_seed);
  } else {
    cfg.arch.input_resolution = cfg.dataset.resolution;
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.optimizer = t.value("optimizer", cfg.train.optimizer);
  }
  if (j.contains("mc")) {
    const auto& m = j.at("mc");
    cfg.mc.passes = m.value("passes", cfg.mc.passes);
    cfg.mc.seed = m.value("seed", cfg.mc.seed);
    cfg.mc.aggregation =
        aggregation_from_string(m.value("aggregation", std::string("sum_variance_logits")));
    cfg.mc.score_space = score_space_from_string(m.value("score_space", std::string("logits")));
  }
  if (j.contains("attacks")) {
    for (const auto& a : j.at("attacks")) {
      AttackConfig ac;
      ac.kind = attack_kind_from_string(a.value("kind", std::string("fgsm")));
      ac.epsilon = a.value("epsilon", ac.epsilon);
      ac.pgd_step = a.value("alpha", ac.epsilon / 4.0);
      ac.pgd_iters = a.value("iters", ac.pgd_iters);
      ac.random_start = a.value("random_start", ac.random_start);
      ac.seed = a.value("seed", ac.seed);
      cfg.attacks.push_back(ac);
    }
  }
  if (j.contains("noise")) {
    for (const auto& n : j.at("noise")) {
      NoiseSpec ns;
      const std::string kind = n.value("kind", std::string("gaussian"));
      if (kind == "gaussian") {
        ns.kind = NoiseKind::gaussian;
      } else if (kind == "salt_pepper") {
        ns.kind = NoiseKind::salt_pepper;
      } else {
        throw InvalidArgument("noise.kind: unknown kind " + kind);
      }
      ns.strength = n.value("strength", ns.strength);
      ns.seed = n.value("seed", ns.seed);
      cfg.noise.push_back(ns);
    }
  }
  cfg.thresholds = j.value("thresholds", std::vector<Scalar>());
  cfg.output_dir = j.value("output_dir", std::string("runs"));
  cfg.export_images = j.value("export_images", false);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config parse error in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void set_field(nlohmann::json& j, const std::string& key, const std::string& value) {
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;
  }
  nlohmann::json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw InvalidArgument("bad --set key: " + key);
    if (dot == std::string::npos) {
      (*cur)[part] = parsed;
      return;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

void apply_master_seed(ExperimentConfig& cfg, std::uint64_t master) {
  cfg.dataset.seed = splitmix64(master ^ 0x01);
  cfg.dataset.split.seed = splitmix64(master ^ 0x02);
  cfg.arch_seed = splitmix64(master ^ 0x03);
  cfg.train.seed = splitmix64(master ^ 0x04);
  cfg.mc.seed = splitmix64(master ^ 0x05);
  for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
    cfg.attacks[i].seed = splitmix64(master ^ (0x100 + i));
  }
  for (std::size_t i = 0; i < cfg.noise.size(); ++i) {
    cfg.noise[i].seed = splitmix64(master ^ (0x200 + i));
  }
}

}  // namespace uq
