#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "uq/classifier.hpp"
#include "uq/mc_dropout.hpp"
#include "uq/rng.hpp"

using namespace uq;

namespace {

ClassifierModel tiny_model(Scalar drop_rate, std::uint64_t seed = 3) {
  ArchConfig arch;
  arch.class_count = 4;
  arch.base_width = 2;
  arch.input_resolution = 16;
  arch.drop_rate = drop_rate;
  arch.unfrozen_blocks = {3, 4};
  ClassifierModel m = build_classifier(arch, seed);
  m.trained = true;  // weights need not be fit for distribution math
  return m;
}

Image random_image(int res, Rng& rng) {
  Image img(3, res, res);
  for (Eigen::Index i = 0; i < img.pix.size(); ++i) img.pix.data()[i] = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("summarize_passes on hand-forced logits") {
  Matrix passes(2, 2);
  passes << 0.0, 1.0, 2.0, 3.0;
  const PredictionDistribution d =
      summarize_passes(passes, Aggregation::sum_variance_logits, ScoreSpace::logits);
  CHECK(d.mean(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.mean(1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(d.per_class_variance(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.per_class_variance(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.uncertainty == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(d.predicted_class == 1);
}

TEST_CASE("a single pass has exactly zero variance") {
  Matrix passes(1, 3);
  passes << 5.0, -2.0, 0.5;
  const PredictionDistribution d =
      summarize_passes(passes, Aggregation::sum_variance_logits, ScoreSpace::logits);
  CHECK(d.per_class_variance.isZero(0.0));
  CHECK(d.uncertainty == 0.0);
  CHECK(d.mean(0) == 5.0);
  CHECK(d.predicted_class == 0);
}

TEST_CASE("zero drop rate collapses the distribution") {
  const ClassifierModel m = tiny_model(0.0);
  Rng rng(1);
  const Image x = random_image(16, rng);
  for (int passes : {1, 10, 100}) {
    MCConfig cfg;
    cfg.passes = passes;
    const PredictionDistribution d = mc_predict(m, x, cfg);
    CHECK(d.per_class_variance.isZero(0.0));
    CHECK(d.uncertainty == 0.0);
  }
}

TEST_CASE("entropy of a deterministic softmax matches the direct formula") {
  const ClassifierModel m = tiny_model(0.0);
  Rng rng(2);
  const Image x = random_image(16, rng);
  MCConfig cfg;
  cfg.passes = 10;
  cfg.aggregation = Aggregation::predictive_entropy;
  cfg.score_space = ScoreSpace::softmax;
  const PredictionDistribution d = mc_predict(m, x, cfg);
  CHECK(d.per_class_variance.isZero(0.0));
  Scalar h = 0.0;
  for (Eigen::Index c = 0; c < d.mean.size(); ++c) {
    if (d.mean(c) > 0.0) h -= d.mean(c) * std::log(d.mean(c));
  }
  CHECK(d.uncertainty == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("mean equals the column mean of the recorded passes") {
  const ClassifierModel m = tiny_model(0.4);
  Rng rng(3);
  const Image x = random_image(16, rng);
  MCConfig cfg;
  cfg.passes = 25;
  cfg.seed = 17;
  const PredictionDistribution d = mc_predict(m, x, cfg);
  REQUIRE(d.per_pass_scores.rows() == 25);
  for (Eigen::Index j = 0; j < d.mean.size(); ++j) {
    Scalar col = 0.0;
    for (Eigen::Index i = 0; i < 25; ++i) col += d.per_pass_scores(i, j);
    CHECK(d.mean(j) == doctest::Approx(col / 25.0).epsilon(1e-9));
    Scalar var = 0.0;
    for (Eigen::Index i = 0; i < 25; ++i) {
      const Scalar dev = d.per_pass_scores(i, j) - col / 25.0;
      var += dev * dev;
    }
    CHECK(d.per_class_variance(j) == doctest::Approx(var / 25.0).epsilon(1e-9));
  }
}

TEST_CASE("softmax-space passes are rows of a simplex") {
  const ClassifierModel m = tiny_model(0.4);
  Rng rng(4);
  const Image x = random_image(16, rng);
  MCConfig cfg;
  cfg.passes = 20;
  cfg.aggregation = Aggregation::sum_variance_softmax;
  cfg.score_space = ScoreSpace::softmax;
  const PredictionDistribution d = mc_predict(m, x, cfg);
  for (Eigen::Index i = 0; i < d.per_pass_scores.rows(); ++i) {
    CHECK(d.per_pass_scores.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(d.per_pass_scores.row(i).minCoeff() >= 0.0);
  }
  CHECK(d.mean.sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("uncertainty_scalar hand examples") {
  PredictionDistribution d;
  d.score_space = ScoreSpace::logits;
  d.per_class_variance = Vector(2);
  d.per_class_variance << 1.0, 1.0;
  d.mean = Vector::Zero(2);
  CHECK(uncertainty_scalar(d, Aggregation::sum_variance_logits) == 2.0);

  PredictionDistribution u;
  u.score_space = ScoreSpace::softmax;
  u.per_class_variance = Vector::Zero(4);
  u.mean = Vector::Constant(4, 0.25);
  CHECK(uncertainty_scalar(u, Aggregation::predictive_entropy) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(uncertainty_scalar(u, Aggregation::sum_variance_softmax) == 0.0);
}

TEST_CASE("aggregation and score space must be compatible") {
  MCConfig cfg;
  cfg.aggregation = Aggregation::sum_variance_logits;
  cfg.score_space = ScoreSpace::softmax;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.aggregation = Aggregation::predictive_entropy;
  cfg.score_space = ScoreSpace::logits;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.aggregation = Aggregation::sum_variance_softmax;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg.score_space = ScoreSpace::softmax;
  CHECK_NOTHROW(cfg.validate());

  PredictionDistribution d;
  d.score_space = ScoreSpace::logits;
  d.per_class_variance = Vector::Zero(2);
  d.mean = Vector::Zero(2);
  CHECK_THROWS_AS(uncertainty_scalar(d, Aggregation::predictive_entropy), InvalidArgument);
  CHECK_THROWS_AS(uncertainty_scalar(d, Aggregation::sum_variance_softmax),
                  InvalidArgument);
}

TEST_CASE("mc_predict validates its inputs") {
  const ClassifierModel m = tiny_model(0.2);
  Rng rng(5);
  const Image x = random_image(16, rng);
  MCConfig cfg;
  cfg.passes = 0;
  CHECK_THROWS_AS(mc_predict(m, x, cfg), InvalidArgument);
  cfg.passes = 2;
  ClassifierModel untrained = m;
  untrained.trained = false;
  CHECK_THROWS_AS(mc_predict(untrained, x, cfg), UntrainedModelError);
}

TEST_CASE("flag_unreliable uses a strict threshold") {
  PredictionDistribution d;
  d.uncertainty = 2.0;
  CHECK(flag_unreliable(d, 1.9));
  CHECK_FALSE(flag_unreliable(d, 2.0));  // ties are not flagged
  CHECK_FALSE(flag_unreliable(d, 2.1));
  CHECK_THROWS_AS(flag_unreliable(d, -0.5), InvalidArgument);
}

TEST_CASE("mc_predict is deterministic in the seed") {
  const ClassifierModel m = tiny_model(0.3);
  Rng rng(6);
  const Image x = random_image(16, rng);
  MCConfig cfg;
  cfg.passes = 30;
  cfg.seed = 42;
  const PredictionDistribution a = mc_predict(m, x, cfg);
  const PredictionDistribution b = mc_predict(m, x, cfg);
  CHECK(a.per_pass_scores == b.per_pass_scores);
  CHECK(a.uncertainty == b.uncertainty);
  cfg.seed = 43;
  const PredictionDistribution c = mc_predict(m, x, cfg);
  CHECK(a.per_pass_scores != c.per_pass_scores);
}

TEST_CASE("growing the pass count keeps earlier passes unchanged") {
  const ClassifierModel m = tiny_model(0.3);
  Rng rng(7);
  const Image x = random_image(16, rng);
  MCConfig cfg;
  cfg.seed = 9;
  cfg.passes = 8;
  const PredictionDistribution small = mc_predict(m, x, cfg);
  cfg.passes = 32;
  const PredictionDistribution big = mc_predict(m, x, cfg);
  CHECK(big.per_pass_scores.topRows(8) == small.per_pass_scores);
}

TEST_CASE("string round trips") {
  CHECK(aggregation_from_string("sum_variance_logits") == Aggregation::sum_variance_logits);
  CHECK(aggregation_from_string("predictive_entropy") == Aggregation::predictive_entropy);
  CHECK(score_space_from_string("softmax") == ScoreSpace::softmax);
  CHECK(std::string(to_string(Aggregation::sum_variance_softmax)) ==
        "sum_variance_softmax");
  CHECK(std::string(to_string(ScoreSpace::logits)) == "logits");
  CHECK_THROWS_AS(aggregation_from_string("variance"), InvalidArgument);
  CHECK_THROWS_AS(score_space_from_string("probit"), InvalidArgument);
}
