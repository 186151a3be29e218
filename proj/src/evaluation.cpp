#include "uq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace uq {

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::clean: return "clean";
    case Scenario::fgsm_sweep: return "fgsm_sweep";
    case Scenario::pgd_sweep: return "pgd_sweep";
    case Scenario::noisy: return "noisy";
  }
  return "clean";
}

Scalar median(std::vector<Scalar> values) { return quantile(std::move(values), 0.5); }

Scalar quantile(std::vector<Scalar> values, Scalar q) {
  if (values.empty()) throw InvalidArgument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const Scalar pos = q * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const Scalar frac = pos - lo;
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {

std::vector<Scalar> average_ranks(const std::vector<Scalar>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<Scalar> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const Scalar avg = (static_cast<Scalar>(i) + static_cast<Scalar>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

Scalar spearman_correlation(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("spearman: need two equally sized samples of length >= 2");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const Scalar n = static_cast<Scalar>(a.size());
  const Scalar ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const Scalar mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  Scalar cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;  // constant side: correlation 0 by convention
  return cov / std::sqrt(va * vb);
}

Scalar mann_whitney_p(const std::vector<Scalar>& greater, const std::vector<Scalar>& lesser) {
  if (greater.empty() || lesser.empty()) {
    throw InvalidArgument("mann_whitney: both samples must be non-empty");
  }
  std::vector<Scalar> pooled = greater;
  pooled.insert(pooled.end(), lesser.begin(), lesser.end());
  const auto ranks = average_ranks(pooled);
  const Scalar n1 = static_cast<Scalar>(greater.size());
  const Scalar n2 = static_cast<Scalar>(lesser.size());
  Scalar r1 = 0.0;
  for (std::size_t i = 0; i < greater.size(); ++i) r1 += ranks[i];
  const Scalar u = r1 - n1 * (n1 + 1.0) / 2.0;

  // tie correction for the variance of U
  const Scalar n = n1 + n2;
  std::vector<Scalar> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  Scalar tie_term = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const Scalar t = static_cast<Scalar>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const Scalar mu = n1 * n2 / 2.0;
  const Scalar var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) return 1.0;  // all values tied
  const Scalar z = (u - mu - 0.5) / std::sqrt(var);  // continuity correction
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

ScenarioReport evaluate_scenario(const ClassifierModel& m, const Dataset& samples,
                                 const Perturbation& perturbation, const MCConfig& mc,
                                 const std::vector<Scalar>& thresholds,
                                 std::vector<AdversarialResult>* attack_results) {
  if (!m.trained) throw UntrainedModelError();
  if (samples.empty()) throw InvalidArgument("evaluate_scenario: empty dataset");
  mc.validate();

  ScenarioReport report;
  if (std::holds_alternative<AttackConfig>(perturbation)) {
    const auto& a = std::get<AttackConfig>(perturbation);
    a.validate();
    report.scenario = a.kind == AttackKind::fgsm ? Scenario::fgsm_sweep : Scenario::pgd_sweep;
    report.perturbation_strength = a.epsilon;
  } else if (std::holds_alternative<NoiseSpec>(perturbation)) {
    const auto& nspec = std::get<NoiseSpec>(perturbation);
    nspec.validate();
    report.scenario = Scenario::noisy;
    report.perturbation_strength = nspec.strength;
  }

  int correct = 0;
  std::vector<Scalar> uncertainties;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ImageSample& original = samples.samples[i];
    ImageSample subject = original;
    try {
      if (const auto* attack = std::get_if<AttackConfig>(&perturbation)) {
        AttackConfig per_sample = *attack;
        per_sample.seed = splitmix64(attack->seed ^ i);
        AdversarialResult res = attack->kind == AttackKind::fgsm
                                    ? fgsm(m, original, per_sample)
                                    : pgd(m, original, per_sample);
        subject = res.x_adv;
        if (attack_results) attack_results->push_back(std::move(res));
      } else if (const auto* noise = std::get_if<NoiseSpec>(&perturbation)) {
        NoiseSpec per_sample = *noise;
        per_sample.seed = splitmix64(noise->seed ^ i);
        subject = add_noise(original, per_sample);
      }
      MCConfig per_sample_mc = mc;
      per_sample_mc.seed = splitmix64(mc.seed ^ (0xABCD0000u + i));
      const PredictionDistribution d = mc_predict(m, subject.image, per_sample_mc);

      SampleRecord rec;
      rec.source_id = original.source_id;
      rec.true_label = original.label;
      rec.predicted_class = d.predicted_class;
      rec.uncertainty = d.uncertainty;
      rec.perturbation = report.perturbation_strength;
      rec.mean_scores = d.mean;
      rec.per_class_variance = d.per_class_variance;
      if (rec.predicted_class == rec.true_label) ++correct;
      uncertainties.push_back(rec.uncertainty);
      report.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw std::runtime_error("while evaluating sample '" + original.source_id +
                               "': " + e.what());
    }
  }

  report.accuracy = static_cast<Scalar>(correct) / static_cast<Scalar>(samples.size());
  report.uncertainty.median = median(uncertainties);
  report.uncertainty.mean =
      std::accumulate(uncertainties.begin(), uncertainties.end(), 0.0) /
      static_cast<Scalar>(uncertainties.size());
  report.uncertainty.iqr = quantile(uncertainties, 0.75) - quantile(uncertainties, 0.25);
  for (Scalar t : thresholds) {
    const auto flagged = std::count_if(uncertainties.begin(), uncertainties.end(),
                                       [&](Scalar u) { return u > t; });
    report.flagged_fraction.emplace_back(
        t, static_cast<Scalar>(flagged) / static_cast<Scalar>(uncertainties.size()));
  }
  return report;
}

TrendResult uncertainty_trend(const std::vector<ScenarioReport>& reports) {
  if (reports.size() < 2) throw InvalidArgument("uncertainty_trend: need >= 2 reports");
  for (const auto& r : reports) {
    if (r.scenario != reports.front().scenario) {
      throw InvalidArgument("uncertainty_trend: reports mix scenario kinds");
    }
  }
  TrendResult t;
  for (const auto& r : reports) {
    t.strengths.push_back(r.perturbation_strength);
    t.median_uncertainties.push_back(r.uncertainty.median);
  }
  t.rank_correlation = spearman_correlation(t.strengths, t.median_uncertainties);
  t.monotone = std::is_sorted(t.median_uncertainties.begin(), t.median_uncertainties.end());
  return t;
}

FlaggingSummary compare_flagging(const ScenarioReport& clean, const ScenarioReport& attacked,
                                 Scalar threshold) {
  if (clean.records.empty() || attacked.records.empty()) {
    throw InvalidArgument("compare_flagging: empty report");
  }
  auto rate = [&](const ScenarioReport& r) {
    const auto flagged =
        std::count_if(r.records.begin(), r.records.end(),
                      [&](const SampleRecord& s) { return s.uncertainty > threshold; });
    return static_cast<Scalar>(flagged) / static_cast<Scalar>(r.records.size());
  };
  return FlaggingSummary{threshold, rate(attacked), rate(clean)};
}

void write_report_json(const ScenarioReport& r, const std::filesystem::path& path) {
  nlohmann::json j;
  j["scenario"] = to_string(r.scenario);
  j["perturbation_strength"] = r.perturbation_strength;
  j["accuracy"] = r.accuracy;
  j["uncertainty"] = {{"median", r.uncertainty.median},
                      {"mean", r.uncertainty.mean},
                      {"iqr", r.uncertainty.iqr}};
  auto& flagged = j["flagged_fraction"] = nlohmann::json::array();
  for (const auto& [t, f] : r.flagged_fraction) {
    flagged.push_back({{"threshold", t}, {"fraction", f}});
  }
  auto& records = j["records"] = nlohmann::json::array();
  for (const auto& rec : r.records) {
    nlohmann::json rj;
    rj["source_id"] = rec.source_id;
    rj["true_label"] = rec.true_label;
    rj["predicted_class"] = rec.predicted_class;
    rj["uncertainty"] = rec.uncertainty;
    rj["perturbation"] = rec.perturbation;
    rj["mean_scores"] = std::vector<Scalar>(rec.mean_scores.data(),
                                            rec.mean_scores.data() + rec.mean_scores.size());
    rj["per_class_variance"] =
        std::vector<Scalar>(rec.per_class_variance.data(),
                            rec.per_class_variance.data() + rec.per_class_variance.size());
    records.push_back(std::move(rj));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_trend_csv(const std::vector<ScenarioReport>& reports,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "strength,median_uncertainty,mean_uncertainty,accuracy\n";
  for (const auto& r : reports) {
    out << r.perturbation_strength << ',' << r.uncertainty.median << ','
        << r.uncertainty.mean << ',' << r.accuracy << '\n';
  }
}

}  // namespace uq
