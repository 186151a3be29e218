// Command-line front end: dataset generation/ingestion, training, MC-dropout
// evaluation under clean/adversarial/noisy inputs, sweeps and report emission.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "uq/experiment.hpp"
#include "uq/image_io.hpp"
#include "uq/plots.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t master_seed = 0;
  bool seed_given = false;
  std::string output_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file (JSON)");
  cmd->add_option("--set", opts.sets, "override a config field, KEY=VALUE (repeatable)");
  cmd->add_option("--seed", opts.master_seed, "master seed overriding all section seeds")
      ->each([&](const std::string&) { opts.seed_given = true; });
  cmd->add_option("--output", opts.output_dir, "output directory");
}

uq::ExperimentConfig resolve_config(const CommonOpts& opts) {
  json j;
  if (!opts.config_path.empty()) {
    std::ifstream in(opts.config_path);
    if (!in) throw uq::IoError("cannot open config: " + opts.config_path);
    in >> j;
  } else {
    j = uq::to_json(uq::ExperimentConfig{});
  }
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw uq::InvalidArgument("--set expects KEY=VALUE, got: " + kv);
    }
    uq::set_field(j, kv.substr(0, eq), kv.substr(eq + 1));
  }
  uq::ExperimentConfig cfg = uq::config_from_json(j);
  if (opts.seed_given) uq::apply_master_seed(cfg, opts.master_seed);
  if (!opts.output_dir.empty()) {
    cfg.output_dir = opts.output_dir;
  } else if (opts.config_path.empty() || !j.contains("output_dir")) {
    if (const char* env = std::getenv("UQ_OUTPUT_DIR")) cfg.output_dir = env;
  }
  cfg.validate();
  return cfg;
}

int cmd_dataset_generate(const CommonOpts& opts, const std::string& out) {
  const uq::ExperimentConfig cfg = resolve_config(opts);
  const uq::Dataset d = uq::build_dataset(cfg.dataset);
  const fs::path root = out.empty() ? (cfg.output_dir / "dataset") : fs::path(out);
  uq::export_dataset(d, root);
  std::cout << "wrote " << d.size() << " samples (" << d.class_count << " classes) to "
            << root << '\n';
  return 0;
}

int cmd_dataset_inspect(const std::string& root, int resolution) {
  std::vector<std::string> class_names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  }
  std::sort(class_names.begin(), class_names.end());
  if (class_names.empty()) throw uq::IoError("no class subdirectories under " + root);
  const auto loaded = uq::load_directory_dataset(root, class_names, resolution);
  std::cout << "classes: " << loaded.dataset.class_count << '\n';
  std::vector<int> counts(loaded.dataset.class_count, 0);
  for (const auto& s : loaded.dataset.samples) counts[s.label]++;
  for (int c = 0; c < loaded.dataset.class_count; ++c) {
    std::cout << "  " << class_names[c] << ": " << counts[c] << " images\n";
  }
  std::cout << "total: " << loaded.dataset.size() << " (skipped " << loaded.skipped
            << " undecodable)\n";
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

struct TrainedContext {
  uq::DatasetSplits splits;
  uq::ClassifierModel model;
};

TrainedContext load_eval_context(const uq::ExperimentConfig& cfg,
                                 const std::string& model_path) {
  TrainedContext ctx;
  const uq::Dataset full = uq::build_dataset(cfg.dataset);
  ctx.splits = uq::split_dataset(full, cfg.dataset.split);
  ctx.model = uq::load_model(model_path);
  return ctx;
}

int cmd_train(const CommonOpts& opts) {
  const uq::ExperimentConfig cfg = resolve_config(opts);
  const uq::Dataset full = uq::build_dataset(cfg.dataset);
  const uq::DatasetSplits splits = uq::split_dataset(full, cfg.dataset.split);
  uq::ClassifierModel model = uq::build_classifier(cfg.arch, cfg.arch_seed);
  const uq::TrainHistory history = uq::train(model, splits.train, splits.val, cfg.train);
  fs::create_directories(cfg.output_dir);
  uq::save_model(model, cfg.output_dir / "model.bin");
  history.write_csv(cfg.output_dir / "history.csv");
  std::cout << "final val accuracy " << history.val_acc.back() << "; model saved to "
            << (cfg.output_dir / "model.bin") << '\n';
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& mode, const std::string& model_path) {
  const uq::ExperimentConfig cfg = resolve_config(opts);
  TrainedContext ctx = load_eval_context(cfg, model_path);
  fs::create_directories(cfg.output_dir);

  auto emit = [&](const uq::ScenarioReport& report, const std::string& stem) {
    uq::write_report_json(report, cfg.output_dir / (stem + ".json"));
    std::cout << stem << ": accuracy " << report.accuracy << ", median uncertainty "
              << report.uncertainty.median << '\n';
  };

  if (mode == "clean") {
    emit(uq::evaluate_scenario(ctx.model, ctx.splits.test, std::monostate{}, cfg.mc,
                               cfg.thresholds),
         "report_clean");
  } else if (mode == "attack") {
    if (cfg.attacks.empty()) throw uq::InvalidArgument("config lists no attacks");
    for (const auto& attack : cfg.attacks) {
      std::vector<uq::AdversarialResult> adv;
      const auto report = uq::evaluate_scenario(ctx.model, ctx.splits.test, attack, cfg.mc,
                                                cfg.thresholds, &adv);
      std::ostringstream tag;
      tag << to_string(attack.kind) << "_eps" << attack.epsilon;
      std::string stem = tag.str();
      std::replace(stem.begin(), stem.end(), '.', 'p');
      emit(report, "report_" + stem);
      uq::write_attacks_csv(adv, attack, cfg.output_dir / ("attacks_" + stem + ".csv"));
    }
  } else {  // noise
    if (cfg.noise.empty()) throw uq::InvalidArgument("config lists no noise specs");
    for (const auto& noise : cfg.noise) {
      std::ostringstream tag;
      tag << "noisy_" << noise.strength;
      std::string stem = tag.str();
      std::replace(stem.begin(), stem.end(), '.', 'p');
      emit(uq::evaluate_scenario(ctx.model, ctx.splits.test, noise, cfg.mc, cfg.thresholds),
           "report_" + stem);
    }
  }
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::string& axis,
              const std::vector<std::string>& values) {
  const uq::ExperimentConfig cfg = resolve_config(opts);
  std::vector<json> parsed;
  for (const auto& v : values) {
    try {
      parsed.push_back(json::parse(v));
    } catch (const json::exception&) {
      parsed.push_back(v);
    }
  }
  const auto manifests = uq::run_sweep(cfg, axis, parsed);
  std::cout << "sweep complete: " << manifests.size() << " runs under " << cfg.output_dir
            << " (sweep_summary.csv)\n";
  return 0;
}

int cmd_report(const std::string& run_dir) {
  // Rebuild trend CSVs and plots from the report_*.json files of a finished run.
  struct Brief {
    std::string scenario;
    double strength;
    double median, mean, accuracy;
  };
  std::map<std::string, std::vector<Brief>> by_kind;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("report_", 0) != 0 || entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    json j;
    in >> j;
    Brief b{j.at("scenario"), j.at("perturbation_strength"),
            j.at("uncertainty").at("median"), j.at("uncertainty").at("mean"),
            j.at("accuracy")};
    const std::string kind = b.scenario == "clean" ? "clean" : b.scenario;
    by_kind[kind].push_back(b);
  }
  if (by_kind.empty()) throw uq::IoError("no report_*.json found in " + run_dir);
  for (auto& [kind, briefs] : by_kind) {
    if (kind == "clean") continue;
    std::sort(briefs.begin(), briefs.end(),
              [](const Brief& a, const Brief& b) { return a.strength < b.strength; });
    std::ofstream out(fs::path(run_dir) / ("trend_" + kind + ".csv"));
    out << "strength,median_uncertainty,mean_uncertainty,accuracy\n";
    std::vector<double> xs, ys;
    for (const auto& b : briefs) {
      out << b.strength << ',' << b.median << ',' << b.mean << ',' << b.accuracy << '\n';
      xs.push_back(b.strength);
      ys.push_back(b.median);
    }
    if (xs.size() >= 2) {
      uq::plot_line(xs, ys, "median uncertainty vs strength (" + kind + ")", "strength",
                    "median uncertainty", fs::path(run_dir) / ("trend_" + kind + ".png"));
    }
    std::cout << "trend_" << kind << ".csv: " << briefs.size() << " rows\n";
  }
  return 0;
}

int cmd_run(const CommonOpts& opts) {
  const uq::ExperimentConfig cfg = resolve_config(opts);
  const uq::RunManifest manifest = uq::run_experiment(cfg);
  std::cout << "run " << (manifest.complete ? "complete" : "incomplete") << ": "
            << manifest.run_dir << '\n';
  return manifest.complete ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MC-dropout uncertainty quantification for image classification"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* dataset = app.add_subcommand("dataset", "dataset generation and inspection");
  dataset->require_subcommand(1);
  auto* dgen = dataset->add_subcommand("generate", "write a synthetic dataset as PNGs");
  std::string gen_out;
  add_common(dgen, opts);
  dgen->add_option("--out", gen_out, "target directory (default <output>/dataset)");
  auto* dinspect = dataset->add_subcommand("inspect", "summarize a directory dataset");
  std::string inspect_root;
  int inspect_resolution = 64;
  dinspect->add_option("--root", inspect_root, "dataset root")->required();
  dinspect->add_option("--resolution", inspect_resolution, "decode resolution");

  auto* train_cmd = app.add_subcommand("train", "train the classifier");
  add_common(train_cmd, opts);

  auto* eval = app.add_subcommand("eval", "evaluate a trained model");
  eval->require_subcommand(1);
  std::string model_path = "model.bin";
  for (const char* mode : {"clean", "attack", "noise"}) {
    auto* sub = eval->add_subcommand(mode);
    add_common(sub, opts);
    sub->add_option("--model", model_path, "model checkpoint");
  }

  auto* sweep = app.add_subcommand("sweep", "one run per value of a config axis");
  std::string axis;
  std::vector<std::string> sweep_values;
  add_common(sweep, opts);
  sweep->add_option("--axis", axis, "dotted config key, e.g. arch.drop_rate")->required();
  sweep->add_option("--values", sweep_values, "axis values (JSON literals)")->required();

  auto* report = app.add_subcommand("report", "rebuild trends/plots from a run directory");
  std::string report_run;
  report->add_option("--run", report_run, "run directory")->required();

  auto* run = app.add_subcommand("run", "full experiment pipeline");
  add_common(run, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (dgen->parsed()) return cmd_dataset_generate(opts, gen_out);
    if (dinspect->parsed()) return cmd_dataset_inspect(inspect_root, inspect_resolution);
    if (train_cmd->parsed()) return cmd_train(opts);
    if (eval->parsed()) {
      for (const char* mode : {"clean", "attack", "noise"}) {
        if (eval->get_subcommand(mode)->parsed()) return cmd_eval(opts, mode, model_path);
      }
    }
    if (sweep->parsed()) return cmd_sweep(opts, axis, sweep_values);
    if (report->parsed()) return cmd_report(report_run);
    if (run->parsed()) return cmd_run(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
