#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <vector>

#include "uq/dataset.hpp"
#include "uq/nn.hpp"
#include "uq/rng.hpp"
#include "uq/types.hpp"

namespace uq {

enum class Backbone { small_cnn, resnet50_pretrained };

const char* to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

struct ArchConfig {
  Backbone backbone = Backbone::small_cnn;
  int block_count = 4;
  int class_count = 4;
  Scalar drop_rate = 0.1;             // drop probability r; retain p = 1 - r
  std::set<int> unfrozen_blocks;      // subset of {1..block_count}; head always trains
  int input_resolution = 64;
  int base_width = 8;                 // channels of block 1, doubling per block

  void validate() const;
  int feature_dim() const { return base_width << (block_count - 1); }
};

struct PretrainedWeightsUnavailable : std::runtime_error {
  PretrainedWeightsUnavailable()
      : std::runtime_error(
            "resnet50_pretrained weights are not available offline; "
            "fall back to the small_cnn backbone") {}
};

// Fixed forward gains: weights are initialized gain-times smaller and the
// layer output multiplied back up, which leaves activation statistics alone
// but lets Adam's roughly lr-sized per-step movement retrain a layer within
// the fine-tuning step budget.
inline constexpr Scalar kConvGain = 32.0;
inline constexpr Scalar kHeadGain = 8.0;

struct ConvParams {
  Matrix w;  // out_channels x (in_channels*9)
  Vector b;
};

struct DenseParams {
  Matrix w;  // class_count x feature_dim
  Vector b;
};

// Four conv blocks (conv3x3 -> ReLU -> 2x2 average pool), global average pool,
// dropout, linear head.
struct ClassifierModel {
  ArchConfig arch;
  std::vector<ConvParams> blocks;
  DenseParams head;
  bool trained = false;

  int block_channels(int block_index) const {  // 0-based
    return arch.base_width << block_index;
  }
};

ClassifierModel build_classifier(const ArchConfig& arch, std::uint64_t seed);

// Per-sample activation record kept for backpropagation.
struct ForwardTrace {
  std::vector<Matrix> inputs;      // raster entering each block
  std::vector<Matrix> patches;     // im2col of each block input
  std::vector<Matrix> post_relu;   // pre-pool activation of each block
  std::vector<Eigen::MatrixXi> pool_argmax;
  std::vector<int> heights;        // spatial size entering each block
  Vector feature;                  // standardized global-average-pooled trunk output
  Scalar feature_sigma = 1.0;      // divisor used by the standardization
  Vector dropout_mask;             // empty when dropout was off
  Vector logits;
};

// Deterministic trunk: image -> pooled feature vector.
Vector trunk_forward(const ClassifierModel& m, const Image& x, ForwardTrace* trace);

// Feature -> logits, applying an inverted-dropout mask when rng is given.
Vector head_forward(const ClassifierModel& m, const Vector& feature, bool dropout_enabled,
                    Rng* rng, ForwardTrace* trace);

Vector forward_single(const ClassifierModel& m, const Image& x, bool dropout_enabled,
                      Rng* rng, ForwardTrace* trace = nullptr);

// Batched forward; row i holds the class scores of batch[i].
Matrix forward(const ClassifierModel& m, const std::vector<Image>& batch,
               bool dropout_enabled, Rng* rng);

struct Gradients {
  std::vector<ConvParams> blocks;
  DenseParams head;
  void init_like(const ClassifierModel& m);
  void accumulate(const Gradients& other);
  void scale(Scalar factor);
};

// Backward pass from dlogits. Weight gradients are written for unfrozen blocks
// (and the head); the input gradient is returned when want_input_grad is set.
Matrix backward(const ClassifierModel& m, const ForwardTrace& trace, const Vector& dlogits,
                Gradients* grads, bool want_input_grad);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  Scalar learning_rate = 1e-4;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";

  void validate() const;
};

struct TrainHistory {
  std::vector<Scalar> train_acc;
  std::vector<Scalar> train_loss;
  std::vector<Scalar> val_acc;
  std::vector<Scalar> val_loss;

  void write_csv(const std::filesystem::path& path) const;
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(int epoch)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch)),
        epoch(epoch) {}
  int epoch;
};

TrainHistory train(ClassifierModel& m, const Dataset& train_set, const Dataset& val_set,
                   const TrainConfig& cfg);

// Accuracy and mean cross-entropy with dropout disabled.
std::pair<Scalar, Scalar> evaluate_accuracy(const ClassifierModel& m, const Dataset& d);

void save_model(const ClassifierModel& m, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace uq
