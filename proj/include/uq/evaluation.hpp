#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "uq/attacks.hpp"
#include "uq/classifier.hpp"
#include "uq/dataset.hpp"
#include "uq/mc_dropout.hpp"

namespace uq {

enum class Scenario { clean, fgsm_sweep, pgd_sweep, noisy };

const char* to_string(Scenario s);

struct SampleRecord {
  std::string source_id;
  int true_label = 0;
  int predicted_class = 0;
  Scalar uncertainty = 0.0;
  Scalar perturbation = 0.0;  // epsilon or noise strength; 0 for clean
  Vector mean_scores;
  Vector per_class_variance;
};

struct UncertaintySummary {
  Scalar median = 0.0;
  Scalar mean = 0.0;
  Scalar iqr = 0.0;
};

struct ScenarioReport {
  Scenario scenario = Scenario::clean;
  Scalar perturbation_strength = 0.0;
  std::vector<SampleRecord> records;
  Scalar accuracy = 0.0;
  UncertaintySummary uncertainty;
  std::vector<std::pair<Scalar, Scalar>> flagged_fraction;  // (threshold, fraction)
};

struct TrendResult {
  std::vector<Scalar> strengths;
  std::vector<Scalar> median_uncertainties;
  Scalar rank_correlation = 0.0;
  bool monotone = false;
};

using Perturbation = std::variant<std::monostate, AttackConfig, NoiseSpec>;

// Applies the perturbation (if any) to each sample, runs mc_predict on the
// result and aggregates. Per-sample seeds are derived from the configured
// seeds and the sample index.
ScenarioReport evaluate_scenario(const ClassifierModel& m, const Dataset& samples,
                                 const Perturbation& perturbation, const MCConfig& mc,
                                 const std::vector<Scalar>& thresholds = {},
                                 std::vector<AdversarialResult>* attack_results = nullptr);

// Spearman rank correlation (average ranks for ties; 0 when either side is
// constant) between strength and median uncertainty; monotone means the
// medians are non-decreasing in strength order.
TrendResult uncertainty_trend(const std::vector<ScenarioReport>& reports);

struct FlaggingSummary {
  Scalar threshold = 0.0;
  Scalar true_flag_rate = 0.0;   // flagged fraction of attacked samples
  Scalar false_flag_rate = 0.0;  // flagged fraction of clean samples
};

FlaggingSummary compare_flagging(const ScenarioReport& clean, const ScenarioReport& attacked,
                                 Scalar threshold);

// Order statistics over a copy of the values.
Scalar median(std::vector<Scalar> values);
Scalar quantile(std::vector<Scalar> values, Scalar q);

Scalar spearman_correlation(const std::vector<Scalar>& a, const std::vector<Scalar>& b);

// One-sided Mann-Whitney U: p-value for "values in greater stochastically
// exceed values in lesser" (normal approximation with tie correction).
Scalar mann_whitney_p(const std::vector<Scalar>& greater, const std::vector<Scalar>& lesser);

void write_report_json(const ScenarioReport& r, const std::filesystem::path& path);
void write_trend_csv(const std::vector<ScenarioReport>& reports,
                     const std::filesystem::path& path);

}  // namespace uq
