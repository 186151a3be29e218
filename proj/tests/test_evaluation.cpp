#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "uq/dataset.hpp"
#include "uq/evaluation.hpp"
#include "uq/rng.hpp"

using namespace uq;

namespace {

ClassifierModel tiny_model(Scalar drop_rate) {
  ArchConfig arch;
  arch.class_count = 4;
  arch.base_width = 2;
  arch.input_resolution = 16;
  arch.drop_rate = drop_rate;
  arch.unfrozen_blocks = {3, 4};
  ClassifierModel m = build_classifier(arch, 5);
  m.trained = true;
  return m;
}

ScenarioReport report_with(Scenario scenario, Scalar strength, Scalar med) {
  ScenarioReport r;
  r.scenario = scenario;
  r.perturbation_strength = strength;
  r.uncertainty.median = med;
  return r;
}

ScenarioReport report_with_uncertainties(const std::vector<Scalar>& values) {
  ScenarioReport r;
  for (Scalar v : values) {
    SampleRecord rec;
    rec.uncertainty = v;
    r.records.push_back(rec);
  }
  return r;
}

// Independent Spearman oracle: mid-ranks by counting, then Pearson on ranks.
Scalar spearman_oracle(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  auto ranks = [](const std::vector<Scalar>& v) {
    std::vector<Scalar> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      Scalar below = 0.0, equal = 0.0;
      for (Scalar w : v) {
        if (w < v[i]) below += 1.0;
        if (w == v[i]) equal += 1.0;
      }
      r[i] = below + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const Scalar n = static_cast<Scalar>(a.size());
  Scalar ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  Scalar cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("order statistics") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(median({7.0}) == 7.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.0) == 1.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 1.0) == 5.0);
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(quantile({0.0, 10.0}, 0.95) == doctest::Approx(9.5).epsilon(1e-12));
  CHECK_THROWS_AS(median({}), InvalidArgument);
}

TEST_CASE("spearman on strictly increasing medians") {
  const std::vector<Scalar> eps = {0.001, 0.01, 0.05};
  const std::vector<Scalar> med = {0.278, 0.434, 0.555};
  CHECK(spearman_correlation(eps, med) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spearman on constant and reversed inputs") {
  const std::vector<Scalar> eps = {0.001, 0.01, 0.05};
  CHECK(spearman_correlation(eps, {0.4, 0.4, 0.4}) == 0.0);
  CHECK(spearman_correlation(eps, {0.9, 0.5, 0.1}) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS_AS(spearman_correlation({1.0}, {2.0}), InvalidArgument);
  CHECK_THROWS_AS(spearman_correlation({1.0, 2.0}, {1.0}), InvalidArgument);
}

TEST_CASE("trend agrees with an independent rank correlation oracle") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(5);  // up to 6 points
    std::vector<ScenarioReport> reports;
    std::vector<Scalar> strengths, medians;
    Scalar s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += rng.uniform(0.001, 0.05);
      // quantized medians produce frequent ties
      const Scalar med = std::round(rng.uniform(0.0, 4.0)) * 0.25;
      reports.push_back(report_with(Scenario::fgsm_sweep, s, med));
      strengths.push_back(s);
      medians.push_back(med);
    }
    const TrendResult trend = uncertainty_trend(reports);
    CHECK(trend.rank_correlation ==
          doctest::Approx(spearman_oracle(strengths, medians)).epsilon(1e-9));
    CHECK(trend.monotone == std::is_sorted(medians.begin(), medians.end()));
    CHECK(trend.strengths == strengths);
    CHECK(trend.median_uncertainties == medians);
  }
}

TEST_CASE("trend rejects short or mixed-scenario inputs") {
  CHECK_THROWS_AS(uncertainty_trend({report_with(Scenario::fgsm_sweep, 0.01, 1.0)}),
                  InvalidArgument);
  CHECK_THROWS_AS(uncertainty_trend({report_with(Scenario::fgsm_sweep, 0.01, 1.0),
                                     report_with(Scenario::pgd_sweep, 0.02, 2.0)}),
                  InvalidArgument);
}

TEST_CASE("mann_whitney separates shifted samples and accepts ties") {
  std::vector<Scalar> low, high;
  Rng rng(13);
  for (int i = 0; i < 40; ++i) {
    low.push_back(rng.normal(0.0, 1.0));
    high.push_back(rng.normal(3.0, 1.0));
  }
  CHECK(mann_whitney_p(high, low) < 1e-6);
  CHECK(mann_whitney_p(low, high) > 0.99);
  CHECK(mann_whitney_p({1.0, 1.0, 1.0}, {1.0, 1.0}) == 1.0);  // all tied
  CHECK_THROWS_AS(mann_whitney_p({}, {1.0}), InvalidArgument);
}

TEST_CASE("compare_flagging with degenerate thresholds") {
  const ScenarioReport clean = report_with_uncertainties({0.1, 0.2, 0.3, 0.4});
  const ScenarioReport attacked = report_with_uncertainties({1.0, 2.0, 0.05, 3.0});

  FlaggingSummary all = compare_flagging(clean, attacked, 0.0);
  CHECK(all.true_flag_rate == 1.0);
  CHECK(all.false_flag_rate == 1.0);

  FlaggingSummary none = compare_flagging(clean, attacked, 10.0);
  CHECK(none.true_flag_rate == 0.0);
  CHECK(none.false_flag_rate == 0.0);

  FlaggingSummary mid = compare_flagging(clean, attacked, 0.4);  // strict: 0.4 not flagged
  CHECK(mid.false_flag_rate == 0.0);
  CHECK(mid.true_flag_rate == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(compare_flagging(ScenarioReport{}, attacked, 1.0), InvalidArgument);
}

TEST_CASE("scenario evaluation of a dropout-free model has zero uncertainty") {
  const ClassifierModel m = tiny_model(0.0);
  const Dataset d = generate_synthetic_dataset(4, 3, 16, 31);
  MCConfig mc;
  mc.passes = 10;
  const ScenarioReport r = evaluate_scenario(m, d, std::monostate{}, mc, {0.0, 1.0});
  CHECK(r.scenario == Scenario::clean);
  CHECK(r.perturbation_strength == 0.0);
  REQUIRE(r.records.size() == d.size());
  for (const auto& rec : r.records) CHECK(rec.uncertainty == 0.0);
  CHECK(r.uncertainty.median == 0.0);
  CHECK(r.uncertainty.mean == 0.0);
  CHECK(r.uncertainty.iqr == 0.0);
  // strict comparison: zero uncertainty never exceeds a zero threshold
  REQUIRE(r.flagged_fraction.size() == 2);
  CHECK(r.flagged_fraction[0].second == 0.0);
  CHECK(r.flagged_fraction[1].second == 0.0);
}

TEST_CASE("flagged fraction is non-increasing in the threshold") {
  const ClassifierModel m = tiny_model(0.4);
  const Dataset d = generate_synthetic_dataset(4, 4, 16, 32);
  MCConfig mc;
  mc.passes = 15;
  const std::vector<Scalar> thresholds = {0.0, 0.01, 0.1, 1.0, 10.0};
  const ScenarioReport r = evaluate_scenario(m, d, std::monostate{}, mc, thresholds);
  REQUIRE(r.flagged_fraction.size() == thresholds.size());
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    CHECK(r.flagged_fraction[i].second <= r.flagged_fraction[i - 1].second);
  }
}

TEST_CASE("attacked scenarios tag the report and stay inside the budget") {
  const ClassifierModel m = tiny_model(0.2);
  const Dataset d = generate_synthetic_dataset(4, 2, 16, 33);
  MCConfig mc;
  mc.passes = 5;
  AttackConfig attack;
  attack.kind = AttackKind::fgsm;
  attack.epsilon = 0.02;
  std::vector<AdversarialResult> adv;
  const ScenarioReport r = evaluate_scenario(m, d, attack, mc, {}, &adv);
  CHECK(r.scenario == Scenario::fgsm_sweep);
  CHECK(r.perturbation_strength == 0.02);
  REQUIRE(adv.size() == d.size());
  for (std::size_t i = 0; i < adv.size(); ++i) {
    CHECK(adv[i].linf_distance <= 0.02 + 1e-9);
    CHECK(adv[i].x_adv.source_id == d.samples[i].source_id);
  }

  NoiseSpec noise;
  noise.kind = NoiseKind::gaussian;
  noise.strength = 0.1;
  const ScenarioReport rn = evaluate_scenario(m, d, noise, mc);
  CHECK(rn.scenario == Scenario::noisy);
  CHECK(rn.perturbation_strength == 0.1);
}

TEST_CASE("scenario evaluation is deterministic") {
  const ClassifierModel m = tiny_model(0.3);
  const Dataset d = generate_synthetic_dataset(4, 2, 16, 34);
  MCConfig mc;
  mc.passes = 8;
  mc.seed = 77;
  const ScenarioReport a = evaluate_scenario(m, d, std::monostate{}, mc);
  const ScenarioReport b = evaluate_scenario(m, d, std::monostate{}, mc);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].uncertainty == b.records[i].uncertainty);
    CHECK(a.records[i].mean_scores == b.records[i].mean_scores);
  }
  CHECK(a.accuracy == b.accuracy);
}

TEST_CASE("scenario evaluation preconditions") {
  ClassifierModel m = tiny_model(0.3);
  const Dataset d = generate_synthetic_dataset(4, 2, 16, 35);
  MCConfig mc;
  m.trained = false;
  CHECK_THROWS_AS(evaluate_scenario(m, d, std::monostate{}, mc), UntrainedModelError);
  m.trained = true;
  CHECK_THROWS_AS(evaluate_scenario(m, Dataset{}, std::monostate{}, mc), InvalidArgument);
  mc.passes = 0;
  CHECK_THROWS_AS(evaluate_scenario(m, d, std::monostate{}, mc), InvalidArgument);
}
