#include "uq/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace uq {

const char* to_string(Backbone b) {
  return b == Backbone::small_cnn ? "small_cnn" : "resnet50_pretrained";
}

Backbone backbone_from_string(const std::string& s) {
  if (s == "small_cnn") return Backbone::small_cnn;
  if (s == "resnet50_pretrained") return Backbone::resnet50_pretrained;
  throw InvalidArgument("unknown backbone: " + s);
}

void ArchConfig::validate() const {
  if (block_count < 1) throw InvalidArgument("block_count must be positive");
  if (class_count < 2) throw InvalidArgument("class_count must be at least 2");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
    throw InvalidArgument("drop_rate must lie in [0,1)");
  }
  for (int b : unfrozen_blocks) {
    if (b < 1 || b > block_count) {
      throw InvalidArgument("unfrozen block " + std::to_string(b) +
                            " outside {1.." + std::to_string(block_count) + "}");
    }
  }
  if (input_resolution < (1 << block_count)) {
    throw InvalidArgument("input_resolution too small for block_count pools");
  }
  if (base_width < 1) throw InvalidArgument("base_width must be positive");
}

ClassifierModel build_classifier(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  if (arch.backbone == Backbone::resnet50_pretrained) {
    throw PretrainedWeightsUnavailable();
  }
  ClassifierModel m;
  m.arch = arch;
  Rng rng(seed);

  int in_ch = 3;
  for (int b = 0; b < arch.block_count; ++b) {
    const int out_ch = m.block_channels(b);
    ConvParams p;
    p.w = Matrix(out_ch, in_ch * 9);
    const Scalar std = std::sqrt(2.0 / (in_ch * 9)) / kConvGain;  // He init over gain
    for (Eigen::Index i = 0; i < p.w.size(); ++i) p.w.data()[i] = rng.normal(0.0, std);
    p.b = Vector::Zero(out_ch);
    m.blocks.push_back(std::move(p));
    in_ch = out_ch;
  }
  const int f = arch.feature_dim();
  m.head.w = Matrix(arch.class_count, f);
  const Scalar std = std::sqrt(1.0 / f) / kHeadGain;
  for (Eigen::Index i = 0; i < m.head.w.size(); ++i) {
    m.head.w.data()[i] = rng.normal(0.0, std);
  }
  m.head.b = Vector::Zero(arch.class_count);
  return m;
}

Vector trunk_forward(const ClassifierModel& m, const Image& x, ForwardTrace* trace) {
  if (x.channels != 3 || x.height != m.arch.input_resolution ||
      x.width != m.arch.input_resolution) {
    throw ShapeMismatch("input raster does not match the architecture resolution");
  }
  Matrix cur = x.pix;
  int size = x.height;
  for (int b = 0; b < m.arch.block_count; ++b) {
    Matrix patches = nn::im2col3x3(cur, size, size);
    Matrix post =
        nn::relu(((kConvGain * (m.blocks[b].w * patches)).colwise() + m.blocks[b].b).eval());
    Eigen::MatrixXi argmax;
    Matrix pooled = nn::maxpool2_forward(post, size, size, trace ? &argmax : nullptr);
    if (trace) {
      trace->inputs.push_back(std::move(cur));
      trace->patches.push_back(std::move(patches));
      trace->post_relu.push_back(std::move(post));
      trace->pool_argmax.push_back(std::move(argmax));
      trace->heights.push_back(size);
    }
    cur = std::move(pooled);
    size /= 2;
  }
  Vector feature = nn::global_avgpool(cur);
  if (trace) trace->feature = feature;
  return feature;
}

Vector head_forward(const ClassifierModel& m, const Vector& feature, bool dropout_enabled,
                    Rng* rng, ForwardTrace* trace) {
  Vector f = feature;
  if (dropout_enabled && m.arch.drop_rate > 0.0) {
    if (!rng) throw InvalidArgument("dropout_enabled requires an RNG");
    const Vector mask =
        nn::sample_dropout_mask(static_cast<int>(f.size()), m.arch.drop_rate, *rng);
    f = f.cwiseProduct(mask);
    if (trace) trace->dropout_mask = mask;
  }
  Vector logits = kHeadGain * (m.head.w * f) + m.head.b;
  if (trace) trace->logits = logits;
  return logits;
}

Vector forward_single(const ClassifierModel& m, const Image& x, bool dropout_enabled,
                      Rng* rng, ForwardTrace* trace) {
  const Vector feature = trunk_forward(m, x, trace);
  return head_forward(m, feature, dropout_enabled, rng, trace);
}

Matrix forward(const ClassifierModel& m, const std::vector<Image>& batch,
               bool dropout_enabled, Rng* rng) {
  Matrix scores(static_cast<Eigen::Index>(batch.size()), m.arch.class_count);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    scores.row(i) = forward_single(m, batch[i], dropout_enabled, rng).transpose();
  }
  return scores;
}

void Gradients::init_like(const ClassifierModel& m) {
  blocks.clear();
  for (const auto& p : m.blocks) {
    ConvParams g;
    g.w = Matrix::Zero(p.w.rows(), p.w.cols());
    g.b = Vector::Zero(p.b.size());
    blocks.push_back(std::move(g));
  }
  head.w = Matrix::Zero(m.head.w.rows(), m.head.w.cols());
  head.b = Vector::Zero(m.head.b.size());
}

void Gradients::accumulate(const Gradients& other) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].w += other.blocks[i].w;
    blocks[i].b += other.blocks[i].b;
  }
  head.w += other.head.w;
  head.b += other.head.b;
}

void Gradients::scale(Scalar factor) {
  for (auto& g : blocks) {
    g.w *= factor;
    g.b *= factor;
  }
  head.w *= factor;
  head.b *= factor;
}

Matrix backward(const ClassifierModel& m, const ForwardTrace& trace, const Vector& dlogits,
                Gradients* grads, bool want_input_grad) {
  Vector masked_feature = trace.feature;
  if (trace.dropout_mask.size() > 0) {
    masked_feature = masked_feature.cwiseProduct(trace.dropout_mask);
  }
  if (grads) {
    grads->head.w += kHeadGain * (dlogits * masked_feature.transpose());
    grads->head.b += dlogits;
  }
  Vector dfeature = kHeadGain * (m.head.w.transpose() * dlogits);
  if (trace.dropout_mask.size() > 0) {
    dfeature = dfeature.cwiseProduct(trace.dropout_mask);
  }

  // Earliest block whose gradients are still needed.
  int first_needed = want_input_grad ? 0 : m.arch.block_count;
  if (grads) {
    for (int b : m.arch.unfrozen_blocks) first_needed = std::min(first_needed, b - 1);
  }
  if (first_needed >= m.arch.block_count) return Matrix();

  const int last = m.arch.block_count - 1;
  const int pooled_size = trace.heights[last] / 2;
  const Scalar inv_pixels = 1.0 / (static_cast<Scalar>(pooled_size) * pooled_size);
  Matrix dpooled(dfeature.size(), static_cast<Eigen::Index>(pooled_size) * pooled_size);
  dpooled.colwise() = (dfeature * inv_pixels).eval();

  Matrix dcur = std::move(dpooled);
  for (int b = last; b >= first_needed; --b) {
    const int size = trace.heights[b];
    Matrix dpost = nn::maxpool2_backward(dcur, trace.pool_argmax[b], size, size);
    Matrix dpre =
        dpost.cwiseProduct((trace.post_relu[b].array() > 0.0).cast<Scalar>().matrix());
    const bool unfrozen = m.arch.unfrozen_blocks.count(b + 1) > 0;
    if (grads && unfrozen) {
      grads->blocks[b].w += kConvGain * (dpre * trace.patches[b].transpose());
      grads->blocks[b].b += dpre.rowwise().sum();
    }
    if (b > first_needed || want_input_grad) {
      Matrix dpatches = kConvGain * (m.blocks[b].w.transpose() * dpre);
      dcur = nn::col2im3x3(dpatches, static_cast<int>(trace.inputs[b].rows()), size, size);
    }
  }
  return want_input_grad ? dcur : Matrix();
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train.epochs must be at least 1");
  if (batch_size < 1) throw InvalidArgument("train.batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train.learning_rate must be positive");
  if (optimizer != "adam") throw InvalidArgument("unknown optimizer: " + optimizer);
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_acc,train_loss,val_acc,val_loss\n";
  for (std::size_t e = 0; e < train_acc.size(); ++e) {
    out << (e + 1) << ',' << train_acc[e] << ',' << train_loss[e] << ',' << val_acc[e]
        << ',' << val_loss[e] << '\n';
  }
}

std::pair<Scalar, Scalar> evaluate_accuracy(const ClassifierModel& m, const Dataset& d) {
  int correct = 0;
  Scalar loss = 0.0;
  for (const auto& s : d.samples) {
    const Vector logits = forward_single(m, s.image, /*dropout_enabled=*/false, nullptr);
    int pred;
    logits.maxCoeff(&pred);
    if (pred == s.label) ++correct;
    loss += nn::softmax_cross_entropy(logits, s.label, nullptr);
  }
  const Scalar n = static_cast<Scalar>(d.size());
  return {correct / n, loss / n};
}

TrainHistory train(ClassifierModel& m, const Dataset& train_set, const Dataset& val_set,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw InvalidArgument("training requires non-empty train and validation sets");
  }
  if (train_set.class_count != m.arch.class_count ||
      val_set.class_count != m.arch.class_count) {
    throw InvalidArgument("dataset class_count does not match the architecture");
  }

  nn::AdamParams hp;
  std::vector<nn::AdamState> conv_w(m.blocks.size()), conv_b(m.blocks.size());
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    conv_w[b].init(m.blocks[b].w.rows(), m.blocks[b].w.cols());
    conv_b[b].init(m.blocks[b].b.size(), 1);
  }
  nn::AdamState head_w, head_b;
  head_w.init(m.head.w.rows(), m.head.w.cols());
  head_b.init(m.head.b.size(), 1);

  TrainHistory history;
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  int step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, 0x1000u + epoch);
    shuffle_rng.shuffle(order);
    Rng dropout_rng = Rng::stream(cfg.seed, 0x2000u + epoch);

    Scalar epoch_loss = 0.0;
    int epoch_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients grads;
      grads.init_like(m);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = train_set.samples[order[i]];
        ForwardTrace trace;
        const Vector logits =
            forward_single(m, s.image, /*dropout_enabled=*/true, &dropout_rng, &trace);
        Vector dlogits;
        const Scalar loss = nn::softmax_cross_entropy(logits, s.label, &dlogits);
        if (!std::isfinite(loss)) throw DivergenceError(epoch + 1);
        epoch_loss += loss;
        int pred;
        logits.maxCoeff(&pred);
        if (pred == s.label) ++epoch_correct;
        backward(m, trace, dlogits, &grads, /*want_input_grad=*/false);
      }
      grads.scale(1.0 / static_cast<Scalar>(end - start));
      ++step;
      // Linear warmup over the first quarter epoch keeps the high-gain layers
      // from collapsing under the large early Adam steps.
      const int warmup_steps = std::max(
          1, (static_cast<int>(order.size()) + cfg.batch_size - 1) / cfg.batch_size / 4);
      hp.lr = cfg.learning_rate *
              std::min(1.0, static_cast<Scalar>(step) / static_cast<Scalar>(warmup_steps));
      for (int b : m.arch.unfrozen_blocks) {
        const int idx = b - 1;
        nn::adam_step(m.blocks[idx].w, grads.blocks[idx].w, conv_w[idx], hp, step);
        Matrix bias = m.blocks[idx].b, gbias = grads.blocks[idx].b;
        nn::adam_step(bias, gbias, conv_b[idx], hp, step);
        m.blocks[idx].b = bias;
      }
      nn::adam_step(m.head.w, grads.head.w, head_w, hp, step);
      Matrix hbias = m.head.b, ghbias = grads.head.b;
      nn::adam_step(hbias, ghbias, head_b, hp, step);
      m.head.b = hbias;
    }

    history.train_loss.push_back(epoch_loss / static_cast<Scalar>(train_set.size()));
    history.train_acc.push_back(static_cast<Scalar>(epoch_correct) /
                                static_cast<Scalar>(train_set.size()));
    auto [vacc, vloss] = evaluate_accuracy(m, val_set);
    history.val_acc.push_back(vacc);
    history.val_loss.push_back(vloss);
  }
  m.trained = true;
  return history;
}

namespace {

constexpr char kMagic[8] = {'U', 'Q', 'M', 'O', 'D', 'E', 'L', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_matrix(std::ostream& out, const Matrix& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("model file truncated");
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("model file truncated");
  return v;
}

double read_f64(std::istream& in) {
  double v;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError("model file truncated");
  return v;
}

Matrix read_matrix(std::istream& in) {
  const auto rows = read_u64(in);
  const auto cols = read_u64(in);
  if (rows > 1u << 24 || cols > 1u << 24) throw FormatError("implausible tensor shape");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
  if (!in) throw FormatError("model file truncated");
  return m;
}

}  // namespace

void save_model(const ClassifierModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(m.arch.backbone));
  write_u32(out, static_cast<std::uint32_t>(m.arch.block_count));
  write_u32(out, static_cast<std::uint32_t>(m.arch.class_count));
  write_f64(out, m.arch.drop_rate);
  write_u32(out, static_cast<std::uint32_t>(m.arch.input_resolution));
  write_u32(out, static_cast<std::uint32_t>(m.arch.base_width));
  write_u32(out, static_cast<std::uint32_t>(m.arch.unfrozen_blocks.size()));
  for (int b : m.arch.unfrozen_blocks) write_u32(out, static_cast<std::uint32_t>(b));
  write_u32(out, m.trained ? 1 : 0);
  for (const auto& p : m.blocks) {
    write_matrix(out, p.w);
    write_matrix(out, p.b);
  }
  write_matrix(out, m.head.w);
  write_matrix(out, m.head.b);
  if (!out) throw IoError("write failed: " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for read: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a model checkpoint: " + path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion) {
    throw FormatError("model format version " + std::to_string(version) +
                      " does not match supported version " +
                      std::to_string(kFormatVersion));
  }
  ClassifierModel m;
  m.arch.backbone = static_cast<Backbone>(read_u32(in));
  m.arch.block_count = static_cast<int>(read_u32(in));
  m.arch.class_count = static_cast<int>(read_u32(in));
  m.arch.drop_rate = read_f64(in);
  m.arch.input_resolution = static_cast<int>(read_u32(in));
  m.arch.base_width = static_cast<int>(read_u32(in));
  const auto n_unfrozen = read_u32(in);
  for (std::uint32_t i = 0; i < n_unfrozen; ++i) {
    m.arch.unfrozen_blocks.insert(static_cast<int>(read_u32(in)));
  }
  m.trained = read_u32(in) != 0;
  m.arch.validate();
  for (int b = 0; b < m.arch.block_count; ++b) {
    ConvParams p;
    p.w = read_matrix(in);
    p.b = read_matrix(in);
    m.blocks.push_back(std::move(p));
  }
  m.head.w = read_matrix(in);
  m.head.b = read_matrix(in);
  return m;
}

}  // namespace uq
