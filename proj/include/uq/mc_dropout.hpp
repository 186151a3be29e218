#pragma once

#include <cstdint>
#include <string>

#include "uq/classifier.hpp"
#include "uq/types.hpp"

namespace uq {

enum class Aggregation { sum_variance_logits, sum_variance_softmax, predictive_entropy };
enum class ScoreSpace { logits, softmax };

const char* to_string(Aggregation a);
const char* to_string(ScoreSpace s);
Aggregation aggregation_from_string(const std::string& s);
ScoreSpace score_space_from_string(const std::string& s);

struct MCConfig {
  int passes = 100;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::sum_variance_logits;
  ScoreSpace score_space = ScoreSpace::logits;

  void validate() const;
};

struct PredictionDistribution {
  Matrix per_pass_scores;      // passes x class_count, in score_space
  ScoreSpace score_space = ScoreSpace::logits;
  Vector mean;                 // arithmetic mean over passes
  Vector per_class_variance;   // population variance (1/N divisor)
  Scalar uncertainty = 0.0;
  int predicted_class = 0;
};

// Reduction shared by mc_predict and any stubbed source of per-pass scores:
// mean, per-class 1/N variance, argmax and the configured uncertainty scalar.
PredictionDistribution summarize_passes(Matrix per_pass_scores, Aggregation aggregation,
                                        ScoreSpace score_space);

// N stochastic forward passes with dropout enabled; pass i draws its mask from
// RNG stream (seed XOR i), so growing N keeps earlier passes unchanged.
PredictionDistribution mc_predict(const ClassifierModel& m, const Image& x,
                                  const MCConfig& cfg);

Scalar uncertainty_scalar(const PredictionDistribution& d, Aggregation aggregation);

// True iff uncertainty strictly exceeds the threshold.
bool flag_unreliable(const PredictionDistribution& d, Scalar threshold);

}  // namespace uq
