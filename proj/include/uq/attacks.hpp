#pragma once

#include <cstdint>
#include <string>

#include "uq/classifier.hpp"
#include "uq/dataset.hpp"
#include "uq/types.hpp"

namespace uq {

enum class AttackKind { fgsm, pgd };

const char* to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  Scalar epsilon = 0.01;       // L-inf budget, pixels in [0,1]
  Scalar pgd_step = 0.0025;    // alpha
  int pgd_iters = 10;
  bool random_start = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdversarialResult {
  ImageSample x_adv;
  Scalar linf_distance = 0.0;
  int original_prediction = 0;
  int adversarial_prediction = 0;
  bool success = false;  // prediction moved off the true label
};

// Gradient of the cross-entropy loss w.r.t. the input pixels, dropout disabled.
Matrix input_gradient(const ClassifierModel& m, const Image& x, int label);

AdversarialResult fgsm(const ClassifierModel& m, const ImageSample& x,
                       const AttackConfig& cfg);
AdversarialResult pgd(const ClassifierModel& m, const ImageSample& x,
                      const AttackConfig& cfg);

// Per-pixel clamp onto the L-inf ball around x_orig, then onto [0,1].
Matrix project_linf(const Matrix& x_cand, const Matrix& x_orig, Scalar epsilon);

}  // namespace uq
