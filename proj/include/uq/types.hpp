#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace uq {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Raster stored as channels x (height*width), pixel index = y*width + x.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  Matrix pix;

  Image() = default;
  Image(int c, int h, int w) : channels(c), height(h), width(w), pix(Matrix::Zero(c, h * w)) {}

  Scalar& at(int c, int y, int x) { return pix(c, y * width + x); }
  Scalar at(int c, int y, int x) const { return pix(c, y * width + x); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UntrainedModelError : std::logic_error {
  UntrainedModelError() : std::logic_error("model is not trained") {}
};

struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace uq
