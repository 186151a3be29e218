#include "uq/nn.hpp"

#include <cmath>

namespace uq::nn {

Matrix im2col3x3(const Matrix& x, int height, int width) {
  const int channels = static_cast<int>(x.rows());
  Matrix patches = Matrix::Zero(static_cast<Eigen::Index>(channels) * 9,
                                static_cast<Eigen::Index>(height) * width);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x2 = 0; x2 < width; ++x2) {
            const int sx = x2 + kx - 1;
            if (sx < 0 || sx >= width) continue;
            patches(row, y * width + x2) = x(c, sy * width + sx);
          }
        }
      }
    }
  }
  return patches;
}

Matrix col2im3x3(const Matrix& dpatches, int channels, int height, int width) {
  Matrix dx = Matrix::Zero(channels, static_cast<Eigen::Index>(height) * width);
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < height; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int x2 = 0; x2 < width; ++x2) {
            const int sx = x2 + kx - 1;
            if (sx < 0 || sx >= width) continue;
            dx(c, sy * width + sx) += dpatches(row, y * width + x2);
          }
        }
      }
    }
  }
  return dx;
}

Matrix conv3x3_forward(const Matrix& patches, const Matrix& w, const Vector& b) {
  return (w * patches).colwise() + b;
}

Matrix avgpool2_forward(const Matrix& x, int height, int width) {
  const int oh = height / 2, ow = width / 2;
  Matrix y(x.rows(), static_cast<Eigen::Index>(oh) * ow);
  for (int py = 0; py < oh; ++py) {
    for (int px = 0; px < ow; ++px) {
      y.col(py * ow + px) =
          0.25 * (x.col((2 * py) * width + 2 * px) + x.col((2 * py) * width + 2 * px + 1) +
                  x.col((2 * py + 1) * width + 2 * px) +
                  x.col((2 * py + 1) * width + 2 * px + 1));
    }
  }
  return y;
}

Matrix avgpool2_backward(const Matrix& dy, int height, int width) {
  const int oh = height / 2, ow = width / 2;
  Matrix dx = Matrix::Zero(dy.rows(), static_cast<Eigen::Index>(height) * width);
  for (int py = 0; py < oh; ++py) {
    for (int px = 0; px < ow; ++px) {
      const Vector g = 0.25 * dy.col(py * ow + px);
      dx.col((2 * py) * width + 2 * px) = g;
      dx.col((2 * py) * width + 2 * px + 1) = g;
      dx.col((2 * py + 1) * width + 2 * px) = g;
      dx.col((2 * py + 1) * width + 2 * px + 1) = g;
    }
  }
  return dx;
}

Matrix maxpool2_forward(const Matrix& x, int height, int width, Eigen::MatrixXi* argmax) {
  const int oh = height / 2, ow = width / 2;
  Matrix y(x.rows(), static_cast<Eigen::Index>(oh) * ow);
  if (argmax) argmax->resize(x.rows(), static_cast<Eigen::Index>(oh) * ow);
  for (int py = 0; py < oh; ++py) {
    for (int px = 0; px < ow; ++px) {
      const int base = (2 * py) * width + 2 * px;
      const int idx[4] = {base, base + 1, base + width, base + width + 1};
      for (Eigen::Index c = 0; c < x.rows(); ++c) {
        int best = 0;
        Scalar v = x(c, idx[0]);
        for (int k = 1; k < 4; ++k) {
          if (x(c, idx[k]) > v) {
            v = x(c, idx[k]);
            best = k;
          }
        }
        y(c, py * ow + px) = v;
        if (argmax) (*argmax)(c, py * ow + px) = best;
      }
    }
  }
  return y;
}

Matrix maxpool2_backward(const Matrix& dy, const Eigen::MatrixXi& argmax, int height,
                         int width) {
  const int oh = height / 2, ow = width / 2;
  Matrix dx = Matrix::Zero(dy.rows(), static_cast<Eigen::Index>(height) * width);
  for (int py = 0; py < oh; ++py) {
    for (int px = 0; px < ow; ++px) {
      const int base = (2 * py) * width + 2 * px;
      const int idx[4] = {base, base + 1, base + width, base + width + 1};
      for (Eigen::Index c = 0; c < dy.rows(); ++c) {
        dx(c, idx[argmax(c, py * ow + px)]) += dy(c, py * ow + px);
      }
    }
  }
  return dx;
}

Vector sample_dropout_mask(int size, Scalar drop_rate, Rng& rng) {
  Vector mask(size);
  if (drop_rate == 0.0) {
    mask.setOnes();
    return mask;
  }
  const Scalar keep = 1.0 - drop_rate;
  const Scalar scale = 1.0 / keep;
  for (int i = 0; i < size; ++i) {
    mask(i) = rng.bernoulli(keep) ? scale : 0.0;
  }
  return mask;
}

Vector standardize(const Vector& f, Scalar* sigma_out) {
  const Scalar mu = f.mean();
  const Vector centered = f.array() - mu;
  const Scalar sigma =
      std::sqrt(centered.squaredNorm() / static_cast<Scalar>(f.size()) + 1e-8);
  if (sigma_out) *sigma_out = sigma;
  return centered / sigma;
}

Vector standardize_backward(const Vector& dfhat, const Vector& fhat, Scalar sigma) {
  const Scalar n = static_cast<Scalar>(fhat.size());
  const Scalar mean_d = dfhat.mean();
  const Scalar mean_df = dfhat.dot(fhat) / n;
  return (dfhat.array() - mean_d - fhat.array() * mean_df) / sigma;
}

Vector softmax(const Vector& logits) {
  const Vector shifted = logits.array() - logits.maxCoeff();
  Vector e = shifted.array().exp();
  return e / e.sum();
}

Scalar softmax_cross_entropy(const Vector& logits, int label, Vector* dlogits) {
  const Vector p = softmax(logits);
  const Scalar loss = -std::log(std::max(p(label), 1e-300));
  if (dlogits) {
    *dlogits = p;
    (*dlogits)(label) -= 1.0;
  }
  return loss;
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state,
               const AdamParams& hp, int step) {
  state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * grad;
  state.v = hp.beta2 * state.v.array().matrix() +
            (1.0 - hp.beta2) * grad.array().square().matrix();
  const Scalar bc1 = 1.0 - std::pow(hp.beta1, step);
  const Scalar bc2 = 1.0 - std::pow(hp.beta2, step);
  param.array() -=
      hp.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + hp.eps);
}

}  // namespace uq::nn
