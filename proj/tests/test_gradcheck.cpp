#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "uq/attacks.hpp"
#include "uq/classifier.hpp"
#include "uq/nn.hpp"

using namespace uq;

namespace {

ClassifierModel tiny_model(Scalar drop_rate = 0.0) {
  ArchConfig arch;
  arch.class_count = 4;
  arch.base_width = 2;
  arch.input_resolution = 16;
  arch.drop_rate = drop_rate;
  arch.unfrozen_blocks = {1, 2, 3, 4};
  ClassifierModel m = build_classifier(arch, 123);
  m.trained = true;
  return m;
}

Image random_image(int res, Rng& rng) {
  Image img(3, res, res);
  for (Eigen::Index i = 0; i < img.pix.size(); ++i) img.pix.data()[i] = rng.uniform();
  return img;
}

Scalar loss_at(const ClassifierModel& m, const Image& x, int label) {
  const Vector logits = forward_single(m, x, false, nullptr);
  return nn::softmax_cross_entropy(logits, label, nullptr);
}

}  // namespace

TEST_CASE("input gradient matches central finite differences") {
  ClassifierModel m = tiny_model();
  Rng rng(7);
  Image x = random_image(16, rng);
  const int label = 2;
  const Matrix g = input_gradient(m, x, label);
  const Scalar h = 1e-6;

  int checked = 0, sign_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index i = static_cast<Eigen::Index>(rng.below(x.pix.size()));
    Image xp = x, xm = x;
    xp.pix.data()[i] += h;
    xm.pix.data()[i] -= h;
    const Scalar fd = (loss_at(m, xp, label) - loss_at(m, xm, label)) / (2 * h);
    const Scalar an = g.data()[i];
    ++checked;
    if ((fd > 0) == (an > 0)) ++sign_ok;
    if (std::abs(fd) > 1e-8) {
      CHECK(std::abs(an - fd) / std::max(std::abs(fd), 1e-8) < 1e-3);
    }
  }
  CHECK(sign_ok >= 99);
  CHECK(checked == 100);
}

TEST_CASE("weight gradients match central finite differences") {
  ClassifierModel m = tiny_model();
  Rng rng(11);
  Image x = random_image(16, rng);
  const int label = 1;

  ForwardTrace trace;
  const Vector logits = forward_single(m, x, false, nullptr, &trace);
  Vector dlogits;
  nn::softmax_cross_entropy(logits, label, &dlogits);
  Gradients grads;
  grads.init_like(m);
  backward(m, trace, dlogits, &grads, false);

  const Scalar h = 1e-6;
  auto check_param = [&](Matrix& param, const Matrix& grad, int samples) {
    for (int t = 0; t < samples; ++t) {
      const Eigen::Index i = static_cast<Eigen::Index>(rng.below(param.size()));
      const Scalar orig = param.data()[i];
      param.data()[i] = orig + h;
      const Scalar lp = loss_at(m, x, label);
      param.data()[i] = orig - h;
      const Scalar lm = loss_at(m, x, label);
      param.data()[i] = orig;
      const Scalar fd = (lp - lm) / (2 * h);
      CHECK(std::abs(grad.data()[i] - fd) < 1e-5 + 1e-3 * std::abs(fd));
    }
  };
  for (int b = 0; b < 4; ++b) {
    check_param(m.blocks[b].w, grads.blocks[b].w, 20);
    Matrix bias = m.blocks[b].b, gbias = grads.blocks[b].b;
    for (int t = 0; t < 5; ++t) {
      const Eigen::Index i = static_cast<Eigen::Index>(rng.below(bias.size()));
      const Scalar orig = m.blocks[b].b(i);
      m.blocks[b].b(i) = orig + h;
      const Scalar lp = loss_at(m, x, label);
      m.blocks[b].b(i) = orig - h;
      const Scalar lm = loss_at(m, x, label);
      m.blocks[b].b(i) = orig;
      const Scalar fd = (lp - lm) / (2 * h);
      CHECK(std::abs(grads.blocks[b].b(i) - fd) < 1e-5 + 1e-3 * std::abs(fd));
    }
  }
  check_param(m.head.w, grads.head.w, 20);
}
