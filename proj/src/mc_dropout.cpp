#include "uq/mc_dropout.hpp"

#include <cmath>

namespace uq {

const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::sum_variance_logits: return "sum_variance_logits";
    case Aggregation::sum_variance_softmax: return "sum_variance_softmax";
    case Aggregation::predictive_entropy: return "predictive_entropy";
  }
  return "sum_variance_logits";
}

const char* to_string(ScoreSpace s) {
  return s == ScoreSpace::logits ? "logits" : "softmax";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "sum_variance_logits") return Aggregation::sum_variance_logits;
  if (s == "sum_variance_softmax") return Aggregation::sum_variance_softmax;
  if (s == "predictive_entropy") return Aggregation::predictive_entropy;
  throw InvalidArgument("unknown aggregation: " + s);
}

ScoreSpace score_space_from_string(const std::string& s) {
  if (s == "logits") return ScoreSpace::logits;
  if (s == "softmax") return ScoreSpace::softmax;
  throw InvalidArgument("unknown score_space: " + s);
}

void MCConfig::validate() const {
  if (passes < 1) throw InvalidArgument("mc.passes must be at least 1");
  // Fail fast on incompatible pairs rather than at reduction time.
  if (aggregation == Aggregation::sum_variance_logits && score_space != ScoreSpace::logits) {
    throw InvalidArgument("sum_variance_logits requires score_space=logits");
  }
  if (aggregation != Aggregation::sum_variance_logits && score_space != ScoreSpace::softmax) {
    throw InvalidArgument(std::string(to_string(aggregation)) +
                          " requires score_space=softmax");
  }
}

Scalar uncertainty_scalar(const PredictionDistribution& d, Aggregation aggregation) {
  switch (aggregation) {
    case Aggregation::sum_variance_logits:
      if (d.score_space != ScoreSpace::logits) {
        throw InvalidArgument("sum_variance_logits requires logit-space passes");
      }
      return d.per_class_variance.sum();
    case Aggregation::sum_variance_softmax:
      if (d.score_space != ScoreSpace::softmax) {
        throw InvalidArgument("sum_variance_softmax requires softmax-space passes");
      }
      return d.per_class_variance.sum();
    case Aggregation::predictive_entropy: {
      if (d.score_space != ScoreSpace::softmax) {
        throw InvalidArgument("predictive_entropy requires softmax-space passes");
      }
      Scalar h = 0.0;
      for (Eigen::Index c = 0; c < d.mean.size(); ++c) {
        if (d.mean(c) > 0.0) h -= d.mean(c) * std::log(d.mean(c));
      }
      return h;
    }
  }
  throw InvalidArgument("unknown aggregation");
}

PredictionDistribution summarize_passes(Matrix per_pass_scores, Aggregation aggregation,
                                        ScoreSpace score_space) {
  PredictionDistribution d;
  d.per_pass_scores = std::move(per_pass_scores);
  d.score_space = score_space;
  const Eigen::Index n = d.per_pass_scores.rows();
  const Eigen::Index c = d.per_pass_scores.cols();

  d.mean = d.per_pass_scores.colwise().mean().transpose();
  d.per_class_variance = Vector::Zero(c);
  for (Eigen::Index j = 0; j < c; ++j) {
    // Identical passes get an exact zero instead of rounding residue.
    if (d.per_pass_scores.col(j).maxCoeff() == d.per_pass_scores.col(j).minCoeff()) {
      continue;
    }
    d.per_class_variance(j) =
        (d.per_pass_scores.col(j).array() - d.mean(j)).square().sum() / static_cast<Scalar>(n);
  }
  d.mean.maxCoeff(&d.predicted_class);
  d.uncertainty = uncertainty_scalar(d, aggregation);
  return d;
}

PredictionDistribution mc_predict(const ClassifierModel& m, const Image& x,
                                  const MCConfig& cfg) {
  cfg.validate();
  if (!m.trained) throw UntrainedModelError();

  // The trunk is deterministic (the only stochastic layer sits before the
  // head), so it runs once and the N passes re-run dropout + head only.
  const Vector feature = trunk_forward(m, x, nullptr);
  Matrix scores(cfg.passes, m.arch.class_count);
  for (int i = 0; i < cfg.passes; ++i) {
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i));
    Vector logits = head_forward(m, feature, /*dropout_enabled=*/true, &rng, nullptr);
    if (cfg.score_space == ScoreSpace::softmax) {
      scores.row(i) = nn::softmax(logits).transpose();
    } else {
      scores.row(i) = logits.transpose();
    }
  }
  return summarize_passes(std::move(scores), cfg.aggregation, cfg.score_space);
}

bool flag_unreliable(const PredictionDistribution& d, Scalar threshold) {
  if (threshold < 0.0) throw InvalidArgument("threshold must be non-negative");
  return d.uncertainty > threshold;
}

}  // namespace uq
