#pragma once

#include "uq/rng.hpp"
#include "uq/types.hpp"

namespace uq::nn {

// Feature maps are stored as channels x (height*width), matching uq::Image.
// Convolutions are 3x3, stride 1, zero padding 1, expressed as GEMM over
// im2col patch matrices: weights are (out_channels x in_channels*9).

Matrix im2col3x3(const Matrix& x, int height, int width);

// Scatter-add of a patch-gradient matrix back onto the input raster.
Matrix col2im3x3(const Matrix& dpatches, int channels, int height, int width);

Matrix conv3x3_forward(const Matrix& patches, const Matrix& w, const Vector& b);

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix avgpool2_forward(const Matrix& x, int height, int width);
Matrix avgpool2_backward(const Matrix& dy, int height, int width);

// 2x2 max pool, stride 2. argmax records, per output cell, which of the four
// source pixels won (0..3) and is consumed by the backward scatter.
Matrix maxpool2_forward(const Matrix& x, int height, int width,
                        Eigen::MatrixXi* argmax);
Matrix maxpool2_backward(const Matrix& dy, const Eigen::MatrixXi& argmax, int height,
                         int width);

inline Vector global_avgpool(const Matrix& x) { return x.rowwise().mean(); }

// Inverted Bernoulli dropout: each unit kept with probability p = 1 - drop_rate
// and scaled by 1/p, so the expectation matches the mask-free activation.
Vector sample_dropout_mask(int size, Scalar drop_rate, Rng& rng);

// Per-sample standardization of the pooled feature vector (zero mean, unit
// variance). Keeps the head input at a fixed scale regardless of trunk depth.
Vector standardize(const Vector& f, Scalar* sigma_out);
Vector standardize_backward(const Vector& dfhat, const Vector& fhat, Scalar sigma);

Vector softmax(const Vector& logits);

// Cross-entropy of softmax(logits) against a one-hot label; also emits dlogits.
Scalar softmax_cross_entropy(const Vector& logits, int label, Vector* dlogits);

// Adam state for one parameter tensor.
struct AdamState {
  Matrix m;
  Matrix v;
  void init(Eigen::Index rows, Eigen::Index cols) {
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }
};

struct AdamParams {
  Scalar lr = 1e-4;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

void adam_step(Matrix& param, const Matrix& grad, AdamState& state,
               const AdamParams& hp, int step);

}  // namespace uq::nn
