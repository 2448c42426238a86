#pragma once

// Structured-output convolutional network for shadow-edge patches.
//
//   28x28x3 -> conv 5x5 x6 -> tanh -> maxpool 3x3/1 -> conv 5x5 x12 -> tanh
//   -> maxpool 3x3/1 -> dense 3072->64 -> tanh -> head 64 -> units x 2
//
// The head is a bank of independent two-way softmax units, one per cell of
// the central label window (5x5 = 25 units for the structured model, 1 for
// the single-pixel ablation). Everything runs in double precision.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shade/error.hpp"
#include "shade/patch.hpp"
#include "shade/random.hpp"
#include "shade/tensor.hpp"

namespace shade::cnn {

inline constexpr int kPatch = 28;
inline constexpr int kInputChannels = 3;
inline constexpr int kKernel = 5;
inline constexpr int kPool = 3;
inline constexpr int kConv1Filters = 6;
inline constexpr int kConv2Filters = 12;
inline constexpr int kHidden = 64;
inline constexpr int kConv1Out = kPatch - kKernel + 1;     // 24
inline constexpr int kPool1Out = kConv1Out - kPool + 1;    // 22
inline constexpr int kConv2Out = kPool1Out - kKernel + 1;  // 18
inline constexpr int kPool2Out = kConv2Out - kPool + 1;    // 16
inline constexpr int kFlat = kPool2Out * kPool2Out * kConv2Filters;  // 3072

enum class LayerKind { kConv, kMaxPool, kDense, kStructuredHead };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kDense: return "dense";
    case LayerKind::kStructuredHead: return "structured-head";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind;
  int kernel = 0;
  int stride = 0;
  int in_channels = 0;
  int out_channels = 0;
  int in_size = 0;
  int out_size = 0;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// The fixed layer chain. `label_size` is 5 for the structured model and 1
/// for the single-cell ablation; only the head width changes.
inline std::vector<LayerSpec> architecture(int label_size) {
  require(label_size == 1 || label_size == 5, "config", "label_size must be 1 or 5");
  const int units = label_size * label_size;
  return {
      {LayerKind::kConv, kKernel, 1, kInputChannels, kConv1Filters, kPatch, kConv1Out},
      {LayerKind::kMaxPool, kPool, 1, kConv1Filters, kConv1Filters, kConv1Out, kPool1Out},
      {LayerKind::kConv, kKernel, 1, kConv1Filters, kConv2Filters, kPool1Out, kConv2Out},
      {LayerKind::kMaxPool, kPool, 1, kConv2Filters, kConv2Filters, kConv2Out, kPool2Out},
      {LayerKind::kDense, 0, 0, kFlat, kHidden, 1, 1},
      {LayerKind::kStructuredHead, 0, 0, kHidden, units, 1, 1},
  };
}

struct Normalization {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  friend bool operator==(const Normalization&, const Normalization&) = default;
};

// Parameter tensors, in serialization order.
enum Param : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kDenseW, kDenseB, kHeadW, kHeadB, kParamCount };

inline const char* param_name(std::size_t i) {
  static constexpr const char* names[] = {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
                                          "dense.weight", "dense.bias", "head.weight",  "head.bias"};
  return names[i];
}

inline std::vector<std::vector<std::size_t>> param_shapes(int label_size) {
  const std::size_t units = static_cast<std::size_t>(label_size * label_size);
  return {{kKernel, kKernel, kInputChannels, kConv1Filters},
          {kConv1Filters},
          {kKernel, kKernel, kConv1Filters, kConv2Filters},
          {kConv2Filters},
          {kFlat, kHidden},
          {kHidden},
          {kHidden, units, 2},
          {units, 2}};
}

using Gradients = std::vector<Tensor>;

struct CnnModel {
  static constexpr int kFormatVersion = 1;

  int label_size = 5;
  std::vector<LayerSpec> layers;
  std::vector<Tensor> params;
  Normalization norm;
  std::uint64_t seed = 0;
  int format_version = kFormatVersion;

  int units() const { return label_size * label_size; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : params) n += t.size();
    return n;
  }

  /// Throws if layer specs, tensor shapes or normalization are inconsistent.
  void validate() const {
    require(layers == architecture(label_size), "model", "layer specs do not match the fixed architecture");
    const auto shapes = param_shapes(label_size);
    require(params.size() == kParamCount, "model", "expected 8 parameter tensors");
    for (std::size_t i = 0; i < kParamCount; ++i)
      require(params[i].shape() == shapes[i], "model",
              std::string(param_name(i)) + " has shape " + shape_string(params[i].shape()) + ", expected " +
                  shape_string(shapes[i]));
    for (double s : norm.stddev) require(s > 0.0, "model", "normalization stddev must be positive");
  }

  friend bool operator==(const CnnModel&, const CnnModel&) = default;
};

/// Zero-initialized model with the canonical architecture.
inline CnnModel zero_model(int label_size = 5) {
  CnnModel m;
  m.label_size = label_size;
  m.layers = architecture(label_size);
  for (auto& s : param_shapes(label_size)) m.params.emplace_back(s, 0.0);
  return m;
}

/// Rounds every parameter to the nearest 32-bit float, the precision of the
/// model file.
inline void quantize_to_float(CnnModel& m) {
  for (auto& t : m.params)
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

/// Weights uniform in +-scale*sqrt(6/(fan_in+fan_out)), biases zero.
inline CnnModel make_model(int label_size, const Normalization& norm, double init_scale, std::uint64_t seed) {
  CnnModel m = zero_model(label_size);
  m.norm = norm;
  m.seed = seed;
  Rng rng(seed);
  auto init = [&](Tensor& w, double fan_in, double fan_out) {
    const double limit = init_scale * std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w.values()) v = rng.uniform(-limit, limit);
  };
  const double kk = kKernel * kKernel;
  init(m.params[kConv1W], kk * kInputChannels, kk * kConv1Filters);
  init(m.params[kConv2W], kk * kConv1Filters, kk * kConv2Filters);
  init(m.params[kDenseW], kFlat, kHidden);
  init(m.params[kHeadW], kHidden, 2.0 * m.units());
  quantize_to_float(m);
  return m;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

// Rows are output pixels, columns the k*k*C receptive field in kernel order.
inline RowMatrix im2col(const Tensor& in, int k) {
  const int h = static_cast<int>(in.extent(0)), w = static_cast<int>(in.extent(1)), c = static_cast<int>(in.extent(2));
  const int oh = h - k + 1, ow = w - k + 1;
  RowMatrix col(oh * ow, k * k * c);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double* dst = col.data() + static_cast<std::size_t>(y * ow + x) * k * k * c;
      for (int dy = 0; dy < k; ++dy) {
        const double* src = in.data() + (static_cast<std::size_t>(y + dy) * w + x) * c;
        std::copy(src, src + k * c, dst + dy * k * c);
      }
    }
  return col;
}

inline void col2im_add(const RowMatrix& dcol, int k, Tensor& din) {
  const int w = static_cast<int>(din.extent(1)), c = static_cast<int>(din.extent(2));
  const int oh = static_cast<int>(din.extent(0)) - k + 1, ow = w - k + 1;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double* src = dcol.data() + static_cast<std::size_t>(y * ow + x) * k * k * c;
      for (int dy = 0; dy < k; ++dy) {
        double* dst = din.data() + (static_cast<std::size_t>(y + dy) * w + x) * c;
        for (int i = 0; i < k * c; ++i) dst[i] += src[dy * k * c + i];
      }
    }
}

inline void check_finite(const Tensor& t, const char* op) {
  require(t.all_finite(), "non_finite", std::string(op) + " produced a non-finite value");
}

}  // namespace detail

/// Valid convolution with unit stride. `input` is H x W x C, `kernels`
/// k x k x C x F, `bias` has F entries.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require(input.rank() == 3, "shape", "conv2d input must be H x W x C, got " + shape_string(input.shape()));
  require(kernels.rank() == 4, "shape", "conv2d kernels must be k x k x C x F, got " + shape_string(kernels.shape()));
  const std::size_t k = kernels.extent(0);
  require(kernels.extent(1) == k, "shape", "conv2d kernel axis 1 (width) must equal axis 0 (height)");
  require(input.extent(2) == kernels.extent(2), "shape",
          "conv2d channel axis mismatch: input has " + std::to_string(input.extent(2)) + ", kernels expect " +
              std::to_string(kernels.extent(2)));
  require(input.extent(0) >= k, "shape", "conv2d input height smaller than kernel");
  require(input.extent(1) >= k, "shape", "conv2d input width smaller than kernel");
  const std::size_t f = kernels.extent(3);
  require(bias.size() == f, "shape", "conv2d bias length " + std::to_string(bias.size()) + " != filter count " +
                                         std::to_string(f));

  const std::size_t oh = input.extent(0) - k + 1, ow = input.extent(1) - k + 1;
  Tensor out({oh, ow, f});
  const auto col = detail::im2col(input, static_cast<int>(k));
  detail::ConstMapMatrix kmat(kernels.data(), static_cast<Eigen::Index>(k * k * input.extent(2)),
                              static_cast<Eigen::Index>(f));
  detail::MapMatrix omat(out.data(), static_cast<Eigen::Index>(oh * ow), static_cast<Eigen::Index>(f));
  omat.noalias() = col * kmat;
  for (std::size_t p = 0; p < oh * ow; ++p)
    for (std::size_t j = 0; j < f; ++j) out[p * f + j] += bias[j];
  detail::check_finite(out, "conv2d_forward");
  return out;
}

struct PoolResult {
  Tensor output;
  /// For each output value, the flat input index it was taken from.
  std::vector<std::uint32_t> argmax;
};

/// Max pooling over window x window with the given stride. Ties resolve to
/// the first maximum in row-major scan order.
inline PoolResult maxpool_forward(const Tensor& input, int window = kPool, int stride = 1) {
  require(input.rank() == 3, "shape", "maxpool input must be H x W x C");
  require(window >= 1 && stride >= 1, "shape", "maxpool window and stride must be positive");
  const int h = static_cast<int>(input.extent(0)), w = static_cast<int>(input.extent(1)),
            c = static_cast<int>(input.extent(2));
  require(h >= window && w >= window, "shape", "maxpool input smaller than window");
  const int oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  PoolResult r{Tensor({static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), static_cast<std::size_t>(c)}), {}};
  r.argmax.resize(r.output.size());
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int ch = 0; ch < c; ++ch) {
        std::size_t best = (static_cast<std::size_t>(y * stride) * w + x * stride) * c + ch;
        for (int dy = 0; dy < window; ++dy)
          for (int dx = 0; dx < window; ++dx) {
            const std::size_t idx = (static_cast<std::size_t>(y * stride + dy) * w + x * stride + dx) * c + ch;
            if (input[idx] > input[best]) best = idx;
          }
        const std::size_t o = (static_cast<std::size_t>(y) * ow + x) * c + ch;
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
  detail::check_finite(r.output, "maxpool_forward");
  return r;
}

enum class Activation { kIdentity, kTanh };

/// out = act(input . weights + bias); weights are in x out.
inline Tensor dense_forward(std::span<const double> input, const Tensor& weights, const Tensor& bias,
                            Activation act = Activation::kTanh) {
  require(weights.rank() == 2, "shape", "dense weights must be 2-D");
  require(weights.extent(0) == input.size(), "shape",
          "dense input length " + std::to_string(input.size()) + " != weight rows " +
              std::to_string(weights.extent(0)));
  require(bias.size() == weights.extent(1), "shape", "dense bias length != weight columns");
  const auto n_in = static_cast<Eigen::Index>(weights.extent(0));
  const auto n_out = static_cast<Eigen::Index>(weights.extent(1));
  Tensor out({weights.extent(1)});
  Eigen::Map<const Eigen::RowVectorXd> x(input.data(), n_in);
  detail::ConstMapMatrix wmat(weights.data(), n_in, n_out);
  Eigen::Map<Eigen::RowVectorXd> y(out.data(), n_out);
  y.noalias() = x * wmat;
  for (Eigen::Index j = 0; j < n_out; ++j) {
    y[j] += bias[static_cast<std::size_t>(j)];
    if (act == Activation::kTanh) y[j] = std::tanh(y[j]);
  }
  detail::check_finite(out, "dense_forward");
  return out;
}

struct HeadOutput {
  std::vector<double> logits;        // units x 2, [shadow, non-shadow]
  std::vector<double> p_shadow;      // per unit
  std::vector<double> p_background;  // per unit, 1 - p_shadow up to rounding
};

/// Bank of two-way softmax units. Weights are hidden x units x 2.
inline HeadOutput structured_head_forward(std::span<const double> hidden, const Tensor& weights, const Tensor& bias) {
  require(weights.rank() == 3 && weights.extent(2) == 2, "shape", "head weights must be hidden x units x 2");
  require(weights.extent(0) == hidden.size(), "shape", "head input length mismatch");
  require(bias.size() == weights.extent(1) * 2, "shape", "head bias must be units x 2");
  const std::size_t units = weights.extent(1);
  Tensor flat_w({weights.extent(0), units * 2}, std::vector<double>(weights.values().begin(), weights.values().end()));
  Tensor flat_b({units * 2}, std::vector<double>(bias.values().begin(), bias.values().end()));
  const Tensor z = dense_forward(hidden, flat_w, flat_b, Activation::kIdentity);

  HeadOutput out;
  out.logits.assign(z.values().begin(), z.values().end());
  out.p_shadow.resize(units);
  out.p_background.resize(units);
  for (std::size_t u = 0; u < units; ++u) {
    const double a = z[2 * u], b = z[2 * u + 1];
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    out.p_shadow[u] = ea / (ea + eb);
    out.p_background[u] = eb / (ea + eb);
  }
  return out;
}

/// Intermediate activations of one forward pass, kept for backprop.
struct ForwardTrace {
  detail::RowMatrix col1, col2;
  Tensor conv1, conv2;  // post-tanh
  PoolResult pool1, pool2;
  Tensor hidden;  // post-tanh
  HeadOutput head;
};

inline Tensor apply_tanh(Tensor t) {
  for (double& v : t.values()) v = std::tanh(v);
  return t;
}

inline ForwardTrace forward_trace(const CnnModel& model, const Tensor& patch) {
  require(patch.shape() == std::vector<std::size_t>{kPatch, kPatch, kInputChannels}, "shape",
          "patch must be 28x28x3, got " + shape_string(patch.shape()));
  const auto& p = model.params;
  ForwardTrace t;
  t.col1 = detail::im2col(patch, kKernel);
  t.conv1 = apply_tanh(conv2d_forward(patch, p[kConv1W], p[kConv1B]));
  t.pool1 = maxpool_forward(t.conv1);
  t.col2 = detail::im2col(t.pool1.output, kKernel);
  t.conv2 = apply_tanh(conv2d_forward(t.pool1.output, p[kConv2W], p[kConv2B]));
  t.pool2 = maxpool_forward(t.conv2);
  t.hidden = dense_forward(t.pool2.output.values(), p[kDenseW], p[kDenseB], Activation::kTanh);
  t.head = structured_head_forward(t.hidden.values(), p[kHeadW], p[kHeadB]);
  return t;
}

/// Shadow-edge probability per label cell, row-major.
inline std::vector<double> forward(const CnnModel& model, const Tensor& patch) {
  return forward_trace(model, patch).head.p_shadow;
}

inline constexpr double kProbClamp = 1e-12;

/// Summed two-way cross-entropy over all units.
inline double cross_entropy(std::span<const double> p, std::span<const std::uint8_t> label) {
  require(p.size() == label.size(), "shape", "label length does not match head units");
  double loss = 0.0;
  for (std::size_t u = 0; u < p.size(); ++u) {
    require(label[u] <= 1, "label", "labels must be 0 or 1");
    const double pc = std::clamp(p[u], kProbClamp, 1.0 - kProbClamp);
    loss -= label[u] ? std::log(pc) : std::log(1.0 - pc);
  }
  return loss;
}

struct LossGrad {
  double loss = 0.0;
  Gradients grads;
};

inline LossGrad loss_and_backward(const CnnModel& model, const Tensor& patch, std::span<const std::uint8_t> label) {
  using detail::ConstMapMatrix;
  using detail::MapMatrix;
  using detail::RowMatrix;
  const auto& p = model.params;
  const ForwardTrace t = forward_trace(model, patch);
  const std::size_t units = static_cast<std::size_t>(model.units());

  LossGrad out;
  out.loss = cross_entropy(t.head.p_shadow, label);
  for (const auto& s : param_shapes(model.label_size)) out.grads.emplace_back(s, 0.0);
  auto& g = out.grads;

  // Head: dL/dz_shadow = p - y, dL/dz_background = y - p.
  std::vector<double> dz(units * 2);
  for (std::size_t u = 0; u < units; ++u) {
    const double d = t.head.p_shadow[u] - label[u];
    dz[2 * u] = d;
    dz[2 * u + 1] = -d;
  }
  Eigen::Map<const Eigen::VectorXd> dzv(dz.data(), static_cast<Eigen::Index>(dz.size()));
  Eigen::Map<const Eigen::VectorXd> hidden(t.hidden.data(), kHidden);
  MapMatrix(g[kHeadW].data(), kHidden, static_cast<Eigen::Index>(units * 2)).noalias() = hidden * dzv.transpose();
  std::copy(dz.begin(), dz.end(), g[kHeadB].data());
  Eigen::VectorXd dhidden = ConstMapMatrix(p[kHeadW].data(), kHidden, static_cast<Eigen::Index>(units * 2)) * dzv;

  // Dense + tanh.
  for (int j = 0; j < kHidden; ++j) dhidden[j] *= 1.0 - t.hidden[j] * t.hidden[j];
  Eigen::Map<const Eigen::VectorXd> flat(t.pool2.output.data(), kFlat);
  MapMatrix(g[kDenseW].data(), kFlat, kHidden).noalias() = flat * dhidden.transpose();
  std::copy(dhidden.data(), dhidden.data() + kHidden, g[kDenseB].data());
  Eigen::VectorXd dflat = ConstMapMatrix(p[kDenseW].data(), kFlat, kHidden) * dhidden;

  // Pool2 -> conv2 pre-activation.
  RowMatrix dconv2 = RowMatrix::Zero(kConv2Out * kConv2Out, kConv2Filters);
  for (std::size_t i = 0; i < t.pool2.argmax.size(); ++i) dconv2.data()[t.pool2.argmax[i]] += dflat[static_cast<Eigen::Index>(i)];
  for (Eigen::Index i = 0; i < dconv2.size(); ++i) dconv2.data()[i] *= 1.0 - t.conv2[i] * t.conv2[i];
  MapMatrix(g[kConv2W].data(), kKernel * kKernel * kConv1Filters, kConv2Filters).noalias() = t.col2.transpose() * dconv2;
  Eigen::Map<Eigen::RowVectorXd>(g[kConv2B].data(), kConv2Filters) = dconv2.colwise().sum();
  const RowMatrix dcol2 =
      dconv2 * ConstMapMatrix(p[kConv2W].data(), kKernel * kKernel * kConv1Filters, kConv2Filters).transpose();
  Tensor dpool1({kPool1Out, kPool1Out, kConv1Filters});
  detail::col2im_add(dcol2, kKernel, dpool1);

  // Pool1 -> conv1 pre-activation.
  RowMatrix dconv1 = RowMatrix::Zero(kConv1Out * kConv1Out, kConv1Filters);
  for (std::size_t i = 0; i < t.pool1.argmax.size(); ++i) dconv1.data()[t.pool1.argmax[i]] += dpool1[i];
  for (Eigen::Index i = 0; i < dconv1.size(); ++i) dconv1.data()[i] *= 1.0 - t.conv1[i] * t.conv1[i];
  MapMatrix(g[kConv1W].data(), kKernel * kKernel * kInputChannels, kConv1Filters).noalias() = t.col1.transpose() * dconv1;
  Eigen::Map<Eigen::RowVectorXd>(g[kConv1B].data(), kConv1Filters) = dconv1.colwise().sum();
  return out;
}

/// Label vector the model trains against: all 25 cells, or only the centre
/// cell for the single-cell ablation.
inline std::vector<std::uint8_t> target_for(const CnnModel& model, const LabeledPatch& s) {
  if (model.label_size == 5) return {s.y.begin(), s.y.end()};
  return {s.y[kLabelCells / 2]};
}

struct TrainConfig {
  double learning_rate = 0.05;
  double lr_decay = 0.95;
  int epochs = 40;
  int batch_size = 16;
  std::uint64_t seed = 1;
  double init_scale = 1.0;

  void validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "config", "learning_rate must be >= 0");
    require(lr_decay > 0.0 && lr_decay <= 1.0, "config", "lr_decay must be in (0, 1]");
    require(epochs >= 1, "config", "epochs must be >= 1");
    require(batch_size >= 1, "config", "batch_size must be >= 1");
    require(init_scale > 0.0, "config", "init_scale must be > 0");
  }
};

struct TrainResult {
  CnnModel model;
  std::vector<double> loss_curve;  // mean per-sample loss of each epoch
};

/// Minibatch SGD on the mean per-sample loss. The shuffle stream is seeded
/// from config.seed; batches are reduced in index order so results are
/// bit-reproducible. The returned weights are rounded to float32, the
/// precision the model file stores.
inline TrainResult sgd_train(CnnModel model, std::span<const LabeledPatch> samples, const TrainConfig& config,
                             const std::function<void(int, double)>& on_epoch = {}) {
  config.validate();
  model.validate();
  require(!samples.empty(), "data", "training needs at least one sample");
  Rng rng(derive_seed(config.seed, 0x5eed));
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  double lr = config.learning_rate;
  auto grads_sum = zero_model(model.label_size).params;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (auto& t : grads_sum) t.fill(0.0);
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = samples[order[i]];
        const auto target = target_for(model, s);
        LossGrad lg;
        try {
          lg = loss_and_backward(model, s.x, target);
        } catch (const Error& e) {
          throw Error("nan_loss", std::string(e.what()) + " at epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(batch_index));
        }
        if (!std::isfinite(lg.loss))
          throw Error("nan_loss", "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                      std::to_string(batch_index));
        epoch_loss += lg.loss;
        for (std::size_t k = 0; k < kParamCount; ++k) {
          auto dst = grads_sum[k].values();
          auto src = lg.grads[k].values();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      const double step = lr / static_cast<double>(end - start);
      for (std::size_t k = 0; k < kParamCount; ++k) {
        auto w = model.params[k].values();
        auto gsum = grads_sum[k].values();
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= step * gsum[j];
      }
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(samples.size()));
    if (on_epoch) on_epoch(epoch, result.loss_curve.back());
    lr *= config.lr_decay;
  }
  quantize_to_float(model);
  result.model = std::move(model);
  return result;
}

/// Fraction of label cells predicted correctly at probability 0.5.
inline double cell_accuracy(const CnnModel& model, std::span<const LabeledPatch> samples) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : samples) {
    const auto p = forward(model, s.x);
    const auto target = target_for(model, s);
    for (std::size_t u = 0; u < p.size(); ++u) {
      correct += (p[u] >= 0.5) == (target[u] == 1);
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_parameter;
  // Coordinates where every tried step still moved a max-pool selection.
  std::size_t kinks_skipped = 0;
  // Coordinates that needed a step smaller than the requested eps.
  std::size_t step_reductions = 0;
};

/// |a - n| / max(|a|, |n|, floor); the floor keeps coordinates whose true
/// gradient is ~0 from dividing roundoff by roundoff.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares analytic gradients against central differences on a seeded
/// subsample of coordinates (up to 40 per parameter tensor, >= 200 total).
///
/// Overlapping max pooling makes the loss piecewise smooth. When a probe at
/// +-eps selects a different pooling argmax than the unperturbed pass, the
/// difference quotient straddles a kink and says nothing about the
/// gradient; the step is then shrunk by 10x (down to 1e-8) and the
/// coordinate is skipped only if no step stays on one smooth piece.
/// `tamper` lets tests corrupt the analytic gradients first.
inline GradCheckReport grad_check(const CnnModel& model, const LabeledPatch& sample, double eps,
                                  std::uint64_t seed = 0, const std::function<void(Gradients&)>& tamper = {}) {
  require(eps >= 1e-7 && eps <= 1e-3, "config", "grad_check eps must lie in [1e-7, 1e-3]");
  const auto target = target_for(model, sample);
  auto analytic = loss_and_backward(model, sample.x, target).grads;
  if (tamper) tamper(analytic);
  const auto base = forward_trace(model, sample.x);
  auto same_piece = [&](const ForwardTrace& t) {
    return t.pool1.argmax == base.pool1.argmax && t.pool2.argmax == base.pool2.argmax;
  };

  CnnModel probe = model;
  Rng rng(seed);
  GradCheckReport report;
  constexpr std::size_t kPerTensor = 40;
  constexpr double kMinStep = 1e-8;
  for (std::size_t k = 0; k < kParamCount; ++k) {
    const std::size_t n = probe.params[k].size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(std::span<std::size_t>(idx));
    idx.resize(std::min(n, kPerTensor));
    for (std::size_t i : idx) {
      double& w = probe.params[k][i];
      const double saved = w;
      std::optional<double> numeric;
      for (double h = eps; h >= kMinStep * 0.999; h *= 0.1) {
        w = saved + h;
        const auto tp = forward_trace(probe, sample.x);
        w = saved - h;
        const auto tm = forward_trace(probe, sample.x);
        w = saved;
        if (same_piece(tp) && same_piece(tm)) {
          numeric = (cross_entropy(tp.head.p_shadow, target) - cross_entropy(tm.head.p_shadow, target)) / (2.0 * h);
          if (h != eps) ++report.step_reductions;
          break;
        }
      }
      if (!numeric) {
        ++report.kinks_skipped;
        continue;
      }
      const double err = relative_error(analytic[k][i], *numeric);
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = std::string(param_name(k)) + "[" + std::to_string(i) + "]";
      }
      ++report.coordinates;
    }
  }
  return report;
}

}  // namespace shade::cnn
