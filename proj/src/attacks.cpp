#include "uq/attacks.hpp"

#include <cmath>

#include "uq/nn.hpp"
#include "uq/rng.hpp"

namespace uq {

const char* to_string(AttackKind k) { return k == AttackKind::fgsm ? "fgsm" : "pgd"; }

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "pgd") return AttackKind::pgd;
  throw InvalidArgument("unknown attack kind: " + s);
}

void AttackConfig::validate() const {
  // fgsm admits the degenerate zero budget (x_adv = x); pgd needs a positive
  // ball for its step and projection to make sense.
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw InvalidArgument("attack epsilon must lie in [0,1)");
  }
  if (kind == AttackKind::pgd) {
    if (!(epsilon > 0.0)) throw InvalidArgument("pgd epsilon must be positive");
    if (!(pgd_step > 0.0 && pgd_step <= epsilon)) {
      throw InvalidArgument("pgd step must satisfy 0 < alpha <= epsilon");
    }
    if (pgd_iters < 1) throw InvalidArgument("pgd_iters must be at least 1");
  }
}

Matrix input_gradient(const ClassifierModel& m, const Image& x, int label) {
  if (!m.trained) throw UntrainedModelError();
  ForwardTrace trace;
  const Vector logits = forward_single(m, x, /*dropout_enabled=*/false, nullptr, &trace);
  Vector dlogits;
  nn::softmax_cross_entropy(logits, label, &dlogits);
  return backward(m, trace, dlogits, nullptr, /*want_input_grad=*/true);
}

Matrix project_linf(const Matrix& x_cand, const Matrix& x_orig, Scalar epsilon) {
  if (x_cand.rows() != x_orig.rows() || x_cand.cols() != x_orig.cols()) {
    throw ShapeMismatch("project_linf: raster shapes differ");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("project_linf: epsilon must be positive");
  return x_cand.cwiseMax((x_orig.array() - epsilon).matrix())
      .cwiseMin((x_orig.array() + epsilon).matrix())
      .cwiseMax(0.0)
      .cwiseMin(1.0);
}

namespace {

// sign with sign(0) = 0
Matrix sign(const Matrix& g) {
  return g.unaryExpr([](Scalar v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

AdversarialResult finish(const ClassifierModel& m, const ImageSample& x, Matrix adv_pix,
                         Provenance provenance) {
  AdversarialResult r;
  r.x_adv = x;
  r.x_adv.image.pix = std::move(adv_pix);
  r.x_adv.provenance = provenance;
  r.linf_distance = (r.x_adv.image.pix - x.image.pix).cwiseAbs().maxCoeff();

  const Vector orig = forward_single(m, x.image, false, nullptr);
  const Vector adv = forward_single(m, r.x_adv.image, false, nullptr);
  orig.maxCoeff(&r.original_prediction);
  adv.maxCoeff(&r.adversarial_prediction);
  r.success = r.adversarial_prediction != x.label;
  return r;
}

}  // namespace

AdversarialResult fgsm(const ClassifierModel& m, const ImageSample& x,
                       const AttackConfig& cfg) {
  if (cfg.kind != AttackKind::fgsm) throw InvalidArgument("fgsm: cfg.kind mismatch");
  cfg.validate();
  const Matrix g = input_gradient(m, x.image, x.label);
  Matrix adv = (x.image.pix + cfg.epsilon * sign(g)).cwiseMax(0.0).cwiseMin(1.0);
  return finish(m, x, std::move(adv), Provenance::fgsm);
}

AdversarialResult pgd(const ClassifierModel& m, const ImageSample& x,
                      const AttackConfig& cfg) {
  if (cfg.kind != AttackKind::pgd) throw InvalidArgument("pgd: cfg.kind mismatch");
  cfg.validate();
  if (!m.trained) throw UntrainedModelError();

  Image cur = x.image;
  if (cfg.random_start) {
    Rng rng(cfg.seed);
    for (Eigen::Index i = 0; i < cur.pix.size(); ++i) {
      cur.pix.data()[i] += rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
    cur.pix = project_linf(cur.pix, x.image.pix, cfg.epsilon);
  }
  for (int t = 0; t < cfg.pgd_iters; ++t) {
    const Matrix g = input_gradient(m, cur, x.label);
    cur.pix = project_linf(cur.pix + cfg.pgd_step * sign(g), x.image.pix, cfg.epsilon);
  }
  return finish(m, x, std::move(cur.pix), Provenance::pgd);
}

}  // namespace uq
