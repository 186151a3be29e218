#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "uq/classifier.hpp"
#include "uq/dataset.hpp"
#include "uq/nn.hpp"

using namespace uq;
namespace fs = std::filesystem;

namespace {

ArchConfig tiny_arch(Scalar drop_rate = 0.1) {
  ArchConfig arch;
  arch.class_count = 4;
  arch.base_width = 2;
  arch.input_resolution = 16;
  arch.drop_rate = drop_rate;
  arch.unfrozen_blocks = {3, 4};
  return arch;
}

Image random_image(int res, Rng& rng) {
  Image img(3, res, res);
  for (Eigen::Index i = 0; i < img.pix.size(); ++i) img.pix.data()[i] = rng.uniform();
  return img;
}

Dataset tiny_dataset(int per_class, int res, std::uint64_t seed) {
  return generate_synthetic_dataset(4, per_class, res, seed);
}

bool models_equal(const ClassifierModel& a, const ClassifierModel& b) {
  if (a.blocks.size() != b.blocks.size()) return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    if (a.blocks[i].w != b.blocks[i].w || a.blocks[i].b != b.blocks[i].b) return false;
  }
  return a.head.w == b.head.w && a.head.b == b.head.b;
}

}  // namespace

TEST_CASE("build produces finite scores on a zero image") {
  ArchConfig arch;
  arch.unfrozen_blocks = {3, 4};
  const ClassifierModel m = build_classifier(arch, 0);
  CHECK_FALSE(m.trained);
  Image zero(3, 64, 64);
  zero.pix.setZero();
  const Vector scores = forward_single(m, zero, false, nullptr);
  REQUIRE(scores.size() == 4);
  CHECK(scores.allFinite());
}

TEST_CASE("build is deterministic in the seed") {
  const ClassifierModel a = build_classifier(tiny_arch(), 5);
  const ClassifierModel b = build_classifier(tiny_arch(), 5);
  const ClassifierModel c = build_classifier(tiny_arch(), 6);
  CHECK(models_equal(a, b));
  CHECK_FALSE(models_equal(a, c));
}

TEST_CASE("build rejects out-of-range unfrozen blocks") {
  ArchConfig arch = tiny_arch();
  arch.unfrozen_blocks = {5};
  CHECK_THROWS_AS(build_classifier(arch, 0), InvalidArgument);
  arch.unfrozen_blocks = {0};
  CHECK_THROWS_AS(build_classifier(arch, 0), InvalidArgument);
}

TEST_CASE("pretrained backbone is unavailable offline") {
  ArchConfig arch = tiny_arch();
  arch.backbone = Backbone::resnet50_pretrained;
  CHECK_THROWS_AS(build_classifier(arch, 0), PretrainedWeightsUnavailable);
}

TEST_CASE("zero drop rate removes all stochasticity") {
  const ClassifierModel m = build_classifier(tiny_arch(0.0), 3);
  Rng img_rng(1);
  const Image x = random_image(16, img_rng);
  Rng r1(10), r2(20);
  const Vector a = forward_single(m, x, true, &r1);
  const Vector b = forward_single(m, x, true, &r2);
  const Vector c = forward_single(m, x, false, nullptr);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("dropout with distinct rng states perturbs the scores") {
  const ClassifierModel m = build_classifier(tiny_arch(0.5), 3);
  Rng img_rng(2);
  const Image x = random_image(16, img_rng);
  const Vector base = forward_single(m, x, false, nullptr);
  int differing = 0;
  for (int t = 0; t < 10; ++t) {
    Rng rng(100 + t);
    if (forward_single(m, x, true, &rng) != base) ++differing;
  }
  CHECK(differing >= 9);
}

TEST_CASE("deterministic forward is repeatable and batched forward agrees") {
  const ClassifierModel m = build_classifier(tiny_arch(), 3);
  Rng img_rng(3);
  std::vector<Image> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_image(16, img_rng));
  const Matrix scores = forward(m, batch, false, nullptr);
  REQUIRE(scores.rows() == 3);
  for (int i = 0; i < 3; ++i) {
    const Vector single = forward_single(m, batch[i], false, nullptr);
    CHECK(scores.row(i).transpose() == single);
  }
}

TEST_CASE("forward rejects mismatched input shapes") {
  const ClassifierModel m = build_classifier(tiny_arch(), 3);
  Rng img_rng(4);
  const Image wrong = random_image(32, img_rng);
  CHECK_THROWS_AS(forward_single(m, wrong, false, nullptr), ShapeMismatch);
}

TEST_CASE("inverted dropout mask is unbiased within two percent") {
  Rng rng(77);
  const int size = 8;
  Vector mean = Vector::Zero(size);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    mean += nn::sample_dropout_mask(size, 0.3, rng);
  }
  mean /= static_cast<Scalar>(trials);
  for (int i = 0; i < size; ++i) {
    CHECK(mean(i) == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("training updates only unfrozen blocks and the head") {
  ClassifierModel m = build_classifier(tiny_arch(), 9);
  const ClassifierModel before = m;
  const Dataset d = tiny_dataset(6, 16, 21);
  SplitSpec spec;
  spec.train_fraction = 0.5;
  spec.val_fraction = 0.25;
  spec.test_fraction = 0.25;
  const DatasetSplits s = split_dataset(d, spec);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  const TrainHistory h = train(m, s.train, s.val, cfg);

  CHECK(m.trained);
  CHECK(m.blocks[0].w == before.blocks[0].w);  // frozen: bit-identical
  CHECK(m.blocks[0].b == before.blocks[0].b);
  CHECK(m.blocks[1].w == before.blocks[1].w);
  CHECK(m.blocks[1].b == before.blocks[1].b);
  CHECK(m.blocks[2].w != before.blocks[2].w);
  CHECK(m.blocks[3].w != before.blocks[3].w);
  CHECK(m.head.w != before.head.w);

  REQUIRE(h.train_acc.size() == 2);
  REQUIRE(h.val_acc.size() == 2);
  REQUIRE(h.train_loss.size() == 2);
  REQUIRE(h.val_loss.size() == 2);
  for (int e = 0; e < 2; ++e) {
    CHECK(h.train_acc[e] >= 0.0);
    CHECK(h.train_acc[e] <= 1.0);
    CHECK(h.val_acc[e] >= 0.0);
    CHECK(h.val_acc[e] <= 1.0);
    CHECK(h.train_loss[e] >= 0.0);
    CHECK(h.val_loss[e] >= 0.0);
  }
}

TEST_CASE("training is deterministic given the seed") {
  const Dataset d = tiny_dataset(6, 16, 22);
  SplitSpec spec;
  spec.train_fraction = 0.5;
  spec.val_fraction = 0.25;
  spec.test_fraction = 0.25;
  const DatasetSplits s = split_dataset(d, spec);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 33;

  ClassifierModel a = build_classifier(tiny_arch(), 9);
  ClassifierModel b = build_classifier(tiny_arch(), 9);
  const TrainHistory ha = train(a, s.train, s.val, cfg);
  const TrainHistory hb = train(b, s.train, s.val, cfg);
  CHECK(models_equal(a, b));
  CHECK(ha.train_loss == hb.train_loss);
  CHECK(ha.val_acc == hb.val_acc);
}

TEST_CASE("training precondition errors") {
  ClassifierModel m = build_classifier(tiny_arch(), 9);
  const Dataset d = tiny_dataset(4, 16, 23);
  SplitSpec spec;
  spec.train_fraction = 0.5;
  spec.val_fraction = 0.25;
  spec.test_fraction = 0.25;
  const DatasetSplits s = split_dataset(d, spec);

  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_WITH_AS(train(m, s.train, s.val, cfg),
                       doctest::Contains("train.epochs"), InvalidArgument);
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(m, Dataset{}, s.val, cfg), InvalidArgument);

  Dataset wrong = s.train;
  wrong.class_count = 2;
  wrong.class_names = {"a", "b"};
  wrong.samples.resize(2);
  wrong.samples[0].label = 0;
  wrong.samples[1].label = 1;
  CHECK_THROWS_AS(train(m, wrong, s.val, cfg), InvalidArgument);
}

TEST_CASE("model save and load round trips exactly") {
  ClassifierModel m = build_classifier(tiny_arch(), 14);
  m.trained = true;
  const fs::path path = fs::temp_directory_path() / "uq_test_model.bin";
  save_model(m, path);
  const ClassifierModel loaded = load_model(path);
  CHECK(loaded.trained);
  CHECK(loaded.arch.class_count == m.arch.class_count);
  CHECK(loaded.arch.unfrozen_blocks == m.arch.unfrozen_blocks);
  CHECK(models_equal(m, loaded));

  Rng rng(6);
  for (int t = 0; t < 5; ++t) {
    const Image x = random_image(16, rng);
    const Vector a = forward_single(m, x, false, nullptr);
    const Vector b = forward_single(loaded, x, false, nullptr);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
  fs::remove(path);
}

TEST_CASE("loading a truncated checkpoint fails cleanly") {
  ClassifierModel m = build_classifier(tiny_arch(), 14);
  const fs::path path = fs::temp_directory_path() / "uq_test_truncated.bin";
  save_model(m, path);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  CHECK_THROWS_AS(load_model(path), FormatError);
  fs::remove(path);
}

TEST_CASE("version mismatch names both versions") {
  ClassifierModel m = build_classifier(tiny_arch(), 14);
  const fs::path path = fs::temp_directory_path() / "uq_test_version.bin";
  save_model(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);  // format version follows the 8-byte magic
    const std::uint32_t bogus = 9;
    f.write(reinterpret_cast<const char*>(&bogus), sizeof(bogus));
  }
  try {
    load_model(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('9') != std::string::npos);
    CHECK(msg.find('1') != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("load rejects files that are not checkpoints") {
  const fs::path path = fs::temp_directory_path() / "uq_test_notamodel.bin";
  std::ofstream(path) << "hello";
  CHECK_THROWS_AS(load_model(path), FormatError);
  fs::remove(path);
  CHECK_THROWS_AS(load_model("/nonexistent/uq_model.bin"), IoError);
}
