#include "uq/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>
#include <fstream>
#include <iostream>
#include <sstream>

#include "uq/image_io.hpp"
#include "uq/plots.hpp"

namespace uq {

namespace fs = std::filesystem;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d_%H%M%S", &tm);
  return buf;
}

fs::path fresh_run_dir(const fs::path& output_dir) {
  fs::create_directories(output_dir);
  const std::string stamp = utc_timestamp();
  fs::path dir = output_dir / ("run_" + stamp);
  for (int i = 2; fs::exists(dir); ++i) {
    dir = output_dir / ("run_" + stamp + "_" + std::to_string(i));
  }
  fs::create_directories(dir);
  return dir;
}

void point_latest(const fs::path& output_dir, const fs::path& run_dir) {
  const fs::path link = output_dir / "latest";
  std::error_code ec;
  fs::remove(link, ec);
  fs::create_directory_symlink(fs::absolute(run_dir), link, ec);
  if (ec) {  // symlinks unavailable: fall back to a marker file
    std::ofstream(output_dir / "latest.txt") << run_dir.string() << '\n';
  }
}

class StageTimer {
 public:
  StageTimer(RunManifest& manifest, std::string name)
      : manifest_(manifest), name_(std::move(name)),
        start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto dt = std::chrono::steady_clock::now() - start_;
    manifest_.timings_sec[name_] =
        std::chrono::duration_cast<std::chrono::duration<Scalar>>(dt).count();
  }

 private:
  RunManifest& manifest_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

std::string strength_tag(Scalar v) {
  std::ostringstream s;
  s << v;
  std::string out = s.str();
  for (auto& c : out) {
    if (c == '.') c = 'p';
  }
  return out;
}

nlohmann::json report_brief(const ScenarioReport& r) {
  return {{"scenario", to_string(r.scenario)},
          {"strength", r.perturbation_strength},
          {"accuracy", r.accuracy},
          {"median_uncertainty", r.uncertainty.median},
          {"mean_uncertainty", r.uncertainty.mean}};
}

}  // namespace

void RunManifest::write() const {
  nlohmann::json j;
  j["config"] = config;
  j["artifacts"] = artifacts;
  j["timings_sec"] = timings_sec;
  j["seeds"] = seeds;
  j["started_at"] = started_at;
  j["complete"] = complete;
  j["results"] = results;
  std::ofstream out(run_dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest under " + run_dir.string());
  out << j.dump(2) << '\n';
}

Dataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.kind == "synthetic") {
    return generate_synthetic_dataset(cfg.class_count, cfg.per_class, cfg.resolution,
                                      cfg.seed);
  }
  auto loaded = load_directory_dataset(cfg.root, cfg.class_names, cfg.resolution);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  return std::move(loaded.dataset);
}

void write_attacks_csv(const std::vector<AdversarialResult>& results,
                       const AttackConfig& cfg, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "source_id,kind,epsilon,alpha,iters,linf,orig_class,adv_class,success\n";
  for (const auto& r : results) {
    out << r.x_adv.source_id << ',' << to_string(cfg.kind) << ',' << cfg.epsilon << ','
        << (cfg.kind == AttackKind::pgd ? cfg.pgd_step : 0.0) << ','
        << (cfg.kind == AttackKind::pgd ? cfg.pgd_iters : 1) << ',' << r.linf_distance
        << ',' << r.original_prediction << ',' << r.adversarial_prediction << ','
        << (r.success ? 1 : 0) << '\n';
  }
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();

  RunManifest manifest;
  manifest.run_dir = fresh_run_dir(cfg.output_dir);
  manifest.config = to_json(cfg);
  manifest.started_at = utc_timestamp();
  manifest.seeds = {{"dataset", cfg.dataset.seed},
                    {"split", cfg.dataset.split.seed},
                    {"arch", cfg.arch_seed},
                    {"train", cfg.train.seed},
                    {"mc", cfg.mc.seed}};
  for (std::size_t i = 0; i < cfg.attacks.size(); ++i) {
    manifest.seeds["attack_" + std::to_string(i)] = cfg.attacks[i].seed;
  }
  for (std::size_t i = 0; i < cfg.noise.size(); ++i) {
    manifest.seeds["noise_" + std::to_string(i)] = cfg.noise[i].seed;
  }
  manifest.write();  // incomplete until the very end

  auto add_artifact = [&](const std::string& rel) { manifest.artifacts.push_back(rel); };
  {
    std::ofstream out(manifest.run_dir / "config.json");
    out << manifest.config.dump(2) << '\n';
    add_artifact("config.json");
  }

  Dataset full;
  DatasetSplits splits;
  {
    StageTimer timer(manifest, "dataset");
    full = build_dataset(cfg.dataset);
    splits = split_dataset(full, cfg.dataset.split);
    if (cfg.export_images) {
      export_dataset(full, manifest.run_dir / "dataset");
      add_artifact("dataset/manifest.csv");
    }
  }

  ClassifierModel model = build_classifier(cfg.arch, cfg.arch_seed);
  {
    StageTimer timer(manifest, "train");
    TrainHistory history = train(model, splits.train, splits.val, cfg.train);
    history.write_csv(manifest.run_dir / "history.csv");
    add_artifact("history.csv");
    manifest.results["final_train_acc"] = history.train_acc.back();
    manifest.results["final_train_loss"] = history.train_loss.back();
    manifest.results["final_val_acc"] = history.val_acc.back();
    manifest.results["final_val_loss"] = history.val_loss.back();
  }
  save_model(model, manifest.run_dir / "model.bin");
  add_artifact("model.bin");

  auto emit_report = [&](const ScenarioReport& report, const std::string& stem) {
    write_report_json(report, manifest.run_dir / (stem + ".json"));
    add_artifact(stem + ".json");
    manifest.results["reports"].push_back(report_brief(report));
  };

  ScenarioReport clean_report;
  {
    StageTimer timer(manifest, "eval_clean");
    clean_report = evaluate_scenario(model, splits.test, std::monostate{}, cfg.mc,
                                     cfg.thresholds);
    emit_report(clean_report, "report_clean");
  }

  std::vector<ScenarioReport> fgsm_reports, pgd_reports, noisy_reports;
  {
    StageTimer timer(manifest, "eval_attacks");
    std::set<std::string> used_tags;
    for (const auto& attack : cfg.attacks) {
      std::string tag =
          std::string(to_string(attack.kind)) + "_eps" + strength_tag(attack.epsilon);
      for (int n = 2; !used_tags.insert(tag).second; ++n) {
        tag = std::string(to_string(attack.kind)) + "_eps" + strength_tag(attack.epsilon) +
              "_" + std::to_string(n);
      }
      std::vector<AdversarialResult> adv;
      ScenarioReport report =
          evaluate_scenario(model, splits.test, attack, cfg.mc, cfg.thresholds, &adv);
      emit_report(report, "report_" + tag);
      write_attacks_csv(adv, attack, manifest.run_dir / ("attacks_" + tag + ".csv"));
      add_artifact("attacks_" + tag + ".csv");
      if (cfg.export_images) {
        const fs::path dir = manifest.run_dir / ("adv_" + tag);
        fs::create_directories(dir);
        for (const auto& r : adv) {
          std::string stem = r.x_adv.source_id;
          std::replace(stem.begin(), stem.end(), '/', '_');
          save_png(r.x_adv.image, dir / (stem + ".png"));
        }
      }
      (attack.kind == AttackKind::fgsm ? fgsm_reports : pgd_reports).push_back(report);
    }
  }
  {
    StageTimer timer(manifest, "eval_noise");
    for (const auto& noise : cfg.noise) {
      ScenarioReport report =
          evaluate_scenario(model, splits.test, noise, cfg.mc, cfg.thresholds);
      emit_report(report, "report_noisy_" + strength_tag(noise.strength));
      noisy_reports.push_back(report);
    }
  }

  {
    StageTimer timer(manifest, "analysis");
    auto analyze = [&](std::vector<ScenarioReport> reports, const std::string& name) {
      if (reports.empty()) return;
      std::sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
        return a.perturbation_strength < b.perturbation_strength;
      });
      std::vector<ScenarioReport> with_clean;
      with_clean.push_back(clean_report);
      with_clean.front().scenario = reports.front().scenario;
      with_clean.insert(with_clean.end(), reports.begin(), reports.end());
      write_trend_csv(with_clean, manifest.run_dir / ("trend_" + name + ".csv"));
      add_artifact("trend_" + name + ".csv");
      if (reports.size() >= 2) {
        const TrendResult trend = uncertainty_trend(reports);
        manifest.results["trend"][name] = {{"rank_correlation", trend.rank_correlation},
                                           {"monotone", trend.monotone}};
        plot_line(trend.strengths, trend.median_uncertainties,
                  "median uncertainty vs strength (" + name + ")", "strength",
                  "median uncertainty", manifest.run_dir / ("trend_" + name + ".png"));
        add_artifact("trend_" + name + ".png");
      }
      for (Scalar t : cfg.thresholds) {
        for (const auto& report : reports) {
          const FlaggingSummary f = compare_flagging(clean_report, report, t);
          manifest.results["flagging"].push_back(
              {{"scenario", to_string(report.scenario)},
               {"strength", report.perturbation_strength},
               {"threshold", f.threshold},
               {"true_flag_rate", f.true_flag_rate},
               {"false_flag_rate", f.false_flag_rate}});
        }
      }
    };
    analyze(fgsm_reports, "fgsm");
    analyze(pgd_reports, "pgd");
    analyze(noisy_reports, "noise");
  }

  for (const auto& rel : manifest.artifacts) {
    if (!fs::exists(manifest.run_dir / rel)) {
      throw IoError("manifest lists a missing artifact: " + rel);
    }
  }
  manifest.complete = true;
  manifest.write();
  point_latest(cfg.output_dir, manifest.run_dir);
  return manifest;
}

std::vector<RunManifest> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                   const std::vector<nlohmann::json>& values) {
  if (values.empty()) throw InvalidArgument("run_sweep: empty values list");

  std::vector<RunManifest> manifests;
  fs::create_directories(base.output_dir);
  std::ofstream summary(base.output_dir / "sweep_summary.csv");
  if (!summary) throw IoError("cannot write sweep_summary.csv");
  summary << axis << ",train_acc,train_loss,val_acc,val_loss\n";

  for (const auto& value : values) {
    nlohmann::json j = to_json(base);
    set_field(j, axis, value.dump());
    ExperimentConfig cfg;
    try {
      cfg = config_from_json(j);
      cfg.validate();
    } catch (const std::exception& e) {
      throw InvalidArgument("unknown-axis or invalid value for '" + axis +
                            "': " + e.what());
    }
    RunManifest m = run_experiment(cfg);
    summary << (value.is_string() ? value.get<std::string>() : value.dump()) << ','
            << m.results["final_train_acc"].get<Scalar>() << ','
            << m.results["final_train_loss"].get<Scalar>() << ','
            << m.results["final_val_acc"].get<Scalar>() << ','
            << m.results["final_val_loss"].get<Scalar>() << '\n';
    manifests.push_back(std::move(m));
  }
  return manifests;
}

}  // namespace uq
