#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "emo/nn/gemm.hpp"
#include "emo/nn/tensor.hpp"
#include "emo/rng.hpp"

namespace emo::nn {

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEpsilon = 1e-5;

enum class Activation { linear, relu, selu, softmax };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::selu: return "selu";
    case Activation::softmax: return "softmax";
    case Activation::linear: break;
  }
  return "linear";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "selu") return Activation::selu;
  if (s == "softmax") return Activation::softmax;
  throw ModelError("unknown activation '" + std::string(s) + "'");
}

enum class Padding { same, valid };

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  /// Running statistics are stored and serialized but never stepped.
  bool learnable = true;
};

/// Per-call forward state. Dropout draws its mask from `rng`.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

namespace detail {

template <typename T>
void apply_pointwise(Activation act, std::vector<T>& v) {
  switch (act) {
    case Activation::relu:
      for (T& x : v) x = x > T(0) ? x : T(0);
      break;
    case Activation::selu:
      for (T& x : v) {
        x = x > T(0) ? static_cast<T>(kSeluLambda * x)
                     : static_cast<T>(kSeluLambda * kSeluAlpha * (std::exp(static_cast<double>(x)) - 1.0));
      }
      break;
    case Activation::linear:
    case Activation::softmax:
      break;
  }
}

// dz = da * f'(z), given z (pre-activation) and a = f(z).
template <typename T>
void pointwise_backward(Activation act, const std::vector<T>& z, const std::vector<T>& a, std::vector<T>& d) {
  switch (act) {
    case Activation::relu:
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = z[i] > T(0) ? d[i] : T(0);
      break;
    case Activation::selu:
      for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] *= z[i] > T(0) ? static_cast<T>(kSeluLambda) : static_cast<T>(a[i] + kSeluLambda * kSeluAlpha);
      }
      break;
    case Activation::linear:
    case Activation::softmax:
      break;
  }
}

template <typename T>
void softmax_rows(std::vector<T>& v, std::size_t cols) {
  for (std::size_t r = 0; r * cols < v.size(); ++r) {
    T* row = v.data() + r * cols;
    T mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T total = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= total;
  }
}

template <typename T>
void he_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& x : w.data) x = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace detail

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual std::string_view type() const = 0;
  /// Validates the per-sample input shape, sizes parameters, returns the output shape.
  virtual Shape build(const Shape& input) = 0;
  virtual void initialize(Rng&) {}
  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) = 0;
  /// Accumulates parameter gradients; returns dL/dx when `need_input_grad`.
  virtual Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  /// Layer-specific descriptor fields.
  virtual void describe(nlohmann::json&) const {}

  nlohmann::json descriptor() const {
    nlohmann::json j = {{"name", name_}, {"type", std::string(type())}, {"trainable", trainable}};
    describe(j);
    return j;
  }

  const std::string& name() const { return name_; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }

  bool trainable = true;

 protected:
  void check_input(const Tensor<T>& x) const {
    if (x.shape.size() != input_shape_.size() + 1 ||
        !std::equal(input_shape_.begin(), input_shape_.end(), x.shape.begin() + 1)) {
      throw ShapeError(name_ + ": expected input " + to_string(input_shape_) + " per sample, got " +
                       to_string(x.shape));
    }
  }

  std::string name_;
  Shape input_shape_;
  Shape output_shape_;
};

/// Cross-correlation over [N, H, W, C] with a kh x kw kernel, stride 1.
/// Conv1D is the kh = 1 case over [N, L, C].
template <typename T>
class ConvLayer : public Layer<T> {
 public:
  ConvLayer(std::string name, bool one_d, int filters, int kernel, Padding padding, Activation act)
      : Layer<T>(std::move(name)), one_d_(one_d), filters_(filters), kh_(one_d ? 1 : kernel), kw_(kernel),
        padding_(padding), act_(act) {
    if (filters < 1 || kernel < 1) throw ModelError(this->name_ + ": filters and kernel must be positive");
    if (act == Activation::softmax) throw ModelError(this->name_ + ": softmax belongs in an Activation layer");
  }

  std::string_view type() const override { return one_d_ ? "conv1d" : "conv2d"; }

  Shape build(const Shape& in) override {
    if (in.size() != (one_d_ ? 2u : 3u)) throw ShapeError(this->name_ + ": bad input rank " + to_string(in));
    this->input_shape_ = in;
    h_ = one_d_ ? 1 : in[0];
    w_ = one_d_ ? in[0] : in[1];
    cin_ = in.back();
    if (padding_ == Padding::same) {
      oh_ = h_;
      ow_ = w_;
      pad_h_ = (kh_ - 1) / 2;
      pad_w_ = (kw_ - 1) / 2;
    } else {
      oh_ = h_ - kh_ + 1;
      ow_ = w_ - kw_ + 1;
      pad_h_ = pad_w_ = 0;
    }
    if (oh_ < 1 || ow_ < 1) throw ShapeError(this->name_ + ": kernel does not fit input " + to_string(in));
    const Shape kshape = one_d_ ? Shape{kw_, cin_, filters_} : Shape{kh_, kw_, cin_, filters_};
    kernel_ = {this->name_ + "/kernel", Tensor<T>(kshape), Tensor<T>(kshape)};
    bias_ = {this->name_ + "/bias", Tensor<T>({filters_}), Tensor<T>({filters_})};
    this->output_shape_ = one_d_ ? Shape{ow_, filters_} : Shape{oh_, ow_, filters_};
    return this->output_shape_;
  }

  void initialize(Rng& rng) override {
    detail::he_uniform(kernel_.value, static_cast<std::size_t>(kh_) * kw_ * cin_, rng);
    bias_.value.fill(T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    this->check_input(x);
    input_ = x;
    const int n = x.batch();
    const std::size_t rows = static_cast<std::size_t>(oh_) * ow_;
    const std::size_t k = patch_size();
    Tensor<T> z(batched(n, this->output_shape_));
    std::vector<T> cols;
    for (int s = 0; s < n; ++s) {
      im2col(x.sample(s), cols);
      T* out = z.sample(s);
      for (std::size_t r = 0; r < rows; ++r) std::copy(bias_.value.data.begin(), bias_.value.data.end(), out + r * filters_);
      gemm_nn(rows, static_cast<std::size_t>(filters_), k, cols.data(), kernel_.value.data.data(), out);
    }
    return activate(std::move(z));
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    std::vector<T> dz = dy.data;
    if (act_ != Activation::linear) detail::pointwise_backward(act_, pre_.data, post_.data, dz);
    const int n = input_.batch();
    const std::size_t rows = static_cast<std::size_t>(oh_) * ow_;
    const std::size_t k = patch_size();
    const std::size_t per_out = rows * filters_;
    Tensor<T> dx;
    if (need_input_grad) dx = Tensor<T>(input_.shape);
    std::vector<T> cols, dcols, scratch;
    for (int s = 0; s < n; ++s) {
      const T* g = dz.data() + s * per_out;
      im2col(input_.sample(s), cols);
      gemm_tn(k, static_cast<std::size_t>(filters_), rows, cols.data(), g, kernel_.grad.data.data());
      for (std::size_t r = 0; r < rows; ++r) {
        for (int f = 0; f < filters_; ++f) bias_.grad.data[f] += g[r * filters_ + f];
      }
      if (need_input_grad) {
        dcols.assign(rows * k, T(0));
        gemm_nt(rows, k, static_cast<std::size_t>(filters_), g, kernel_.value.data.data(), dcols.data(), scratch);
        col2im(dcols, dx.sample(s));
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }

  void describe(nlohmann::json& j) const override {
    j["filters"] = filters_;
    j["kernel"] = kw_;
    j["padding"] = padding_ == Padding::same ? "same" : "valid";
    j["activation"] = std::string(to_string(act_));
  }

 private:
  std::size_t patch_size() const { return static_cast<std::size_t>(kh_) * kw_ * cin_; }

  void im2col(const T* src, std::vector<T>& cols) const {
    const std::size_t k = patch_size();
    cols.assign(static_cast<std::size_t>(oh_) * ow_ * k, T(0));
    for (int oy = 0; oy < oh_; ++oy) {
      for (int ox = 0; ox < ow_; ++ox) {
        T* dst = cols.data() + (static_cast<std::size_t>(oy) * ow_ + ox) * k;
        for (int ky = 0; ky < kh_; ++ky) {
          const int iy = oy + ky - pad_h_;
          if (iy < 0 || iy >= h_) continue;
          for (int kx = 0; kx < kw_; ++kx) {
            const int ix = ox + kx - pad_w_;
            if (ix < 0 || ix >= w_) continue;
            const T* p = src + (static_cast<std::size_t>(iy) * w_ + ix) * cin_;
            std::copy(p, p + cin_, dst + (static_cast<std::size_t>(ky) * kw_ + kx) * cin_);
          }
        }
      }
    }
  }

  void col2im(const std::vector<T>& cols, T* dst) const {
    const std::size_t k = patch_size();
    for (int oy = 0; oy < oh_; ++oy) {
      for (int ox = 0; ox < ow_; ++ox) {
        const T* src = cols.data() + (static_cast<std::size_t>(oy) * ow_ + ox) * k;
        for (int ky = 0; ky < kh_; ++ky) {
          const int iy = oy + ky - pad_h_;
          if (iy < 0 || iy >= h_) continue;
          for (int kx = 0; kx < kw_; ++kx) {
            const int ix = ox + kx - pad_w_;
            if (ix < 0 || ix >= w_) continue;
            T* p = dst + (static_cast<std::size_t>(iy) * w_ + ix) * cin_;
            const T* q = src + (static_cast<std::size_t>(ky) * kw_ + kx) * cin_;
            for (int c = 0; c < cin_; ++c) p[c] += q[c];
          }
        }
      }
    }
  }

  Tensor<T> activate(Tensor<T> z) {
    if (act_ == Activation::linear) return z;
    pre_ = z;
    detail::apply_pointwise(act_, z.data);
    post_ = z;
    return z;
  }

  bool one_d_;
  int filters_, kh_, kw_;
  Padding padding_;
  Activation act_;
  int h_ = 0, w_ = 0, cin_ = 0, oh_ = 0, ow_ = 0, pad_h_ = 0, pad_w_ = 0;
  Param<T> kernel_, bias_;
  Tensor<T> input_, pre_, post_;
};

/// y = x W + b over [N, in].
template <typename T>
class DenseLayer : public Layer<T> {
 public:
  DenseLayer(std::string name, int units, Activation act) : Layer<T>(std::move(name)), units_(units), act_(act) {
    if (units < 1) throw ModelError(this->name_ + ": units must be positive");
    if (act == Activation::softmax) throw ModelError(this->name_ + ": softmax belongs in an Activation layer");
  }

  std::string_view type() const override { return "dense"; }

  Shape build(const Shape& in) override {
    if (in.size() != 1) throw ShapeError(this->name_ + ": dense needs flat input, got " + to_string(in));
    this->input_shape_ = in;
    in_ = in[0];
    kernel_ = {this->name_ + "/kernel", Tensor<T>({in_, units_}), Tensor<T>({in_, units_})};
    bias_ = {this->name_ + "/bias", Tensor<T>({units_}), Tensor<T>({units_})};
    this->output_shape_ = {units_};
    return this->output_shape_;
  }

  void initialize(Rng& rng) override {
    detail::he_uniform(kernel_.value, static_cast<std::size_t>(in_), rng);
    bias_.value.fill(T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    this->check_input(x);
    input_ = x;
    const int n = x.batch();
    Tensor<T> z({n, units_});
    for (int s = 0; s < n; ++s) std::copy(bias_.value.data.begin(), bias_.value.data.end(), z.sample(s));
    gemm_nn(static_cast<std::size_t>(n), static_cast<std::size_t>(units_), static_cast<std::size_t>(in_),
            x.data.data(), kernel_.value.data.data(), z.data.data());
    if (act_ == Activation::linear) return z;
    pre_ = z;
    detail::apply_pointwise(act_, z.data);
    post_ = z;
    return z;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    std::vector<T> dz = dy.data;
    if (act_ != Activation::linear) detail::pointwise_backward(act_, pre_.data, post_.data, dz);
    const auto n = static_cast<std::size_t>(input_.batch());
    gemm_tn(static_cast<std::size_t>(in_), static_cast<std::size_t>(units_), n, input_.data.data(), dz.data(),
            kernel_.grad.data.data());
    for (std::size_t s = 0; s < n; ++s) {
      for (int u = 0; u < units_; ++u) bias_.grad.data[u] += dz[s * units_ + u];
    }
    if (!need_input_grad) return {};
    Tensor<T> dx(input_.shape);
    std::vector<T> scratch;
    gemm_nt(n, static_cast<std::size_t>(in_), static_cast<std::size_t>(units_), dz.data(), kernel_.value.data.data(),
            dx.data.data(), scratch);
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&kernel_, &bias_}; }

  void describe(nlohmann::json& j) const override {
    j["units"] = units_;
    j["activation"] = std::string(to_string(act_));
  }

 private:
  int units_;
  Activation act_;
  int in_ = 0;
  Param<T> kernel_, bias_;
  Tensor<T> input_, pre_, post_;
};

/// 2x2 max pooling, stride 2, floor mode. Ties go to the first maximum.
template <typename T>
class MaxPool2DLayer : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string_view type() const override { return "maxpool2d"; }

  Shape build(const Shape& in) override {
    if (in.size() != 3 || in[0] < 2 || in[1] < 2) throw ShapeError(this->name_ + ": cannot pool " + to_string(in));
    this->input_shape_ = in;
    this->output_shape_ = {in[0] / 2, in[1] / 2, in[2]};
    return this->output_shape_;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    this->check_input(x);
    in_full_ = x.shape;
    const int n = x.batch(), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor<T> y({n, oh, ow, c});
    argmax_.assign(y.size(), 0);
    std::size_t o = 0;
    for (int s = 0; s < n; ++s) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          for (int ch = 0; ch < c; ++ch, ++o) {
            std::size_t best_i = 0;
            T best = -std::numeric_limits<T>::infinity();
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i = ((static_cast<std::size_t>(s) * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                if (x.data[i] > best) {
                  best = x.data[i];
                  best_i = i;
                }
              }
            }
            y.data[o] = best;
            argmax_[o] = best_i;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    if (!need_input_grad) return {};
    Tensor<T> dx(in_full_);
    for (std::size_t o = 0; o < dy.size(); ++o) dx.data[argmax_[o]] += dy.data[o];
    return dx;
  }

 private:
  Shape in_full_;
  std::vector<std::size_t> argmax_;
};

/// [N, H, W, C] -> [N, C] channel means.
template <typename T>
class GlobalAveragePool2DLayer : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string_view type() const override { return "global_average_pool2d"; }

  Shape build(const Shape& in) override {
    if (in.size() != 3) throw ShapeError(this->name_ + ": needs (H, W, C), got " + to_string(in));
    this->input_shape_ = in;
    this->output_shape_ = {in[2]};
    return this->output_shape_;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    this->check_input(x);
    in_full_ = x.shape;
    const int n = x.batch(), c = x.dim(3);
    const std::size_t spatial = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
    Tensor<T> y({n, c});
    for (int s = 0; s < n; ++s) {
      const T* src = x.sample(s);
      T* dst = y.sample(s);
      for (std::size_t p = 0; p < spatial; ++p) {
        for (int ch = 0; ch < c; ++ch) dst[ch] += src[p * c + ch];
      }
      for (int ch = 0; ch < c; ++ch) dst[ch] /= static_cast<T>(spatial);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    if (!need_input_grad) return {};
    Tensor<T> dx(in_full_);
    const int n = dx.batch(), c = dx.dim(3);
    const std::size_t spatial = static_cast<std::size_t>(dx.dim(1)) * dx.dim(2);
    for (int s = 0; s < n; ++s) {
      T* dst = dx.sample(s);
      const T* g = dy.sample(s);
      for (std::size_t p = 0; p < spatial; ++p) {
        for (int ch = 0; ch < c; ++ch) dst[p * c + ch] = g[ch] / static_cast<T>(spatial);
      }
    }
    return dx;
  }

 private:
  Shape in_full_;
};

template <typename T>
class FlattenLayer : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string_view type() const override { return "flatten"; }

  Shape build(const Shape& in) override {
    this->input_shape_ = in;
    this->output_shape_ = {static_cast<int>(shape_elements(in))};
    return this->output_shape_;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    this->check_input(x);
    in_full_ = x.shape;
    return x.reshaped({x.batch(), this->output_shape_[0]});
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    if (!need_input_grad) return {};
    return dy.reshaped(in_full_);
  }

 private:
  Shape in_full_;
};

/// Inverted dropout: training keeps each unit with probability 1 - rate and
/// scales kept units by 1 / (1 - rate); inference is the identity.
template <typename T>
class DropoutLayer : public Layer<T> {
 public:
  DropoutLayer(std::string name, double rate) : Layer<T>(std::move(name)), rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ModelError(this->name_ + ": dropout rate must lie in [0, 1)");
  }
  std::string_view type() const override { return "dropout"; }
  double rate() const { return rate_; }

  Shape build(const Shape& in) override {
    this->input_shape_ = this->output_shape_ = in;
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override {
    this->check_input(x);
    active_ = ctx.training && rate_ > 0.0;
    if (!active_) return x;
    if (ctx.rng == nullptr) throw std::logic_error(this->name_ + ": training forward needs an rng");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.assign(x.size(), T(0));
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      mask_[i] = ctx.rng->uniform() >= rate_ ? keep_scale : T(0);
      y.data[i] *= mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    if (!need_input_grad) return {};
    if (!active_) return dy;
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask_[i];
    return dx;
  }

  void describe(nlohmann::json& j) const override { j["rate"] = rate_; }

 private:
  double rate_;
  bool active_ = false;
  std::vector<T> mask_;
};

/// Normalizes each channel (last axis) over batch and spatial positions.
/// Training uses batch statistics and updates running estimates with
/// momentum 0.9; inference (or a frozen layer) uses the running estimates.
template <typename T>
class BatchNormLayer : public Layer<T> {
 public:
  using Layer<T>::Layer;
  std::string_view type() const override { return "batch_norm"; }

  Shape build(const Shape& in) override {
    if (in.empty()) throw ShapeError(this->name_ + ": scalar input");
    this->input_shape_ = this->output_shape_ = in;
    c_ = in.back();
    gamma_ = {this->name_ + "/gamma", Tensor<T>({c_}, T(1)), Tensor<T>({c_})};
    beta_ = {this->name_ + "/beta", Tensor<T>({c_}), Tensor<T>({c_})};
    mean_ = {this->name_ + "/moving_mean", Tensor<T>({c_}), Tensor<T>({c_}), false};
    var_ = {this->name_ + "/moving_variance", Tensor<T>({c_}, T(1)), Tensor<T>({c_}), false};
    return in;
  }

  void initialize(Rng&) override {
    gamma_.value.fill(T(1));
    beta_.value.fill(T(0));
    mean_.value.fill(T(0));
    var_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override {
    this->check_input(x);
    batch_mode_ = ctx.training && this->trainable;
    const std::size_t m = x.size() / c_;
    Tensor<T> y(x.shape);
    inv_std_.assign(c_, T(0));
    if (!batch_mode_) {
      for (int ch = 0; ch < c_; ++ch) inv_std_[ch] = static_cast<T>(1.0 / std::sqrt(double(var_.value.data[ch]) + kBatchNormEpsilon));
      xhat_ = Tensor<T>(x.shape);
      for (std::size_t i = 0; i < m; ++i) {
        for (int ch = 0; ch < c_; ++ch) {
          const std::size_t k = i * c_ + ch;
          xhat_.data[k] = (x.data[k] - mean_.value.data[ch]) * inv_std_[ch];
          y.data[k] = gamma_.value.data[ch] * xhat_.data[k] + beta_.value.data[ch];
        }
      }
      return y;
    }
    std::vector<double> mu(c_, 0.0), var(c_, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (int ch = 0; ch < c_; ++ch) mu[ch] += x.data[i * c_ + ch];
    }
    for (double& v : mu) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (int ch = 0; ch < c_; ++ch) {
        const double d = x.data[i * c_ + ch] - mu[ch];
        var[ch] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(m);
    xhat_ = Tensor<T>(x.shape);
    for (int ch = 0; ch < c_; ++ch) inv_std_[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + kBatchNormEpsilon));
    for (std::size_t i = 0; i < m; ++i) {
      for (int ch = 0; ch < c_; ++ch) {
        const std::size_t k = i * c_ + ch;
        xhat_.data[k] = static_cast<T>((x.data[k] - mu[ch]) * inv_std_[ch]);
        y.data[k] = gamma_.value.data[ch] * xhat_.data[k] + beta_.value.data[ch];
      }
    }
    for (int ch = 0; ch < c_; ++ch) {
      mean_.value.data[ch] = static_cast<T>(kBatchNormMomentum * mean_.value.data[ch] + (1.0 - kBatchNormMomentum) * mu[ch]);
      var_.value.data[ch] = static_cast<T>(kBatchNormMomentum * var_.value.data[ch] + (1.0 - kBatchNormMomentum) * var[ch]);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    const std::size_t m = dy.size() / c_;
    if (!batch_mode_) {
      // Affine map with fixed statistics.
      for (std::size_t i = 0; i < m; ++i) {
        for (int ch = 0; ch < c_; ++ch) {
          const std::size_t k = i * c_ + ch;
          gamma_.grad.data[ch] += dy.data[k] * xhat_.data[k];
          beta_.grad.data[ch] += dy.data[k];
        }
      }
      if (!need_input_grad) return {};
      Tensor<T> dx(dy.shape);
      for (std::size_t i = 0; i < m; ++i) {
        for (int ch = 0; ch < c_; ++ch) {
          const std::size_t k = i * c_ + ch;
          dx.data[k] = dy.data[k] * gamma_.value.data[ch] * inv_std_[ch];
        }
      }
      return dx;
    }
    std::vector<double> sum_dy(c_, 0.0), sum_dy_xhat(c_, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (int ch = 0; ch < c_; ++ch) {
        const std::size_t k = i * c_ + ch;
        sum_dy[ch] += dy.data[k];
        sum_dy_xhat[ch] += static_cast<double>(dy.data[k]) * xhat_.data[k];
      }
    }
    for (int ch = 0; ch < c_; ++ch) {
      gamma_.grad.data[ch] += static_cast<T>(sum_dy_xhat[ch]);
      beta_.grad.data[ch] += static_cast<T>(sum_dy[ch]);
    }
    if (!need_input_grad) return {};
    Tensor<T> dx(dy.shape);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (int ch = 0; ch < c_; ++ch) {
        const std::size_t k = i * c_ + ch;
        const double g = gamma_.value.data[ch] * inv_std_[ch];
        dx.data[k] = static_cast<T>(g * (dy.data[k] - inv_m * sum_dy[ch] - xhat_.data[k] * inv_m * sum_dy_xhat[ch]));
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &mean_, &var_}; }

 private:
  int c_ = 0;
  bool batch_mode_ = false;
  Param<T> gamma_, beta_, mean_, var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

/// Standalone activation; softmax acts on the last axis.
template <typename T>
class ActivationLayer : public Layer<T> {
 public:
  ActivationLayer(std::string name, Activation act) : Layer<T>(std::move(name)), act_(act) {}
  std::string_view type() const override { return "activation"; }
  Activation activation() const { return act_; }

  Shape build(const Shape& in) override {
    this->input_shape_ = this->output_shape_ = in;
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    this->check_input(x);
    pre_ = x;
    Tensor<T> y = x;
    if (act_ == Activation::softmax) {
      detail::softmax_rows(y.data, static_cast<std::size_t>(this->input_shape_.back()));
    } else {
      detail::apply_pointwise(act_, y.data);
    }
    post_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad) override {
    if (!need_input_grad) return {};
    Tensor<T> dx = dy;
    if (act_ == Activation::softmax) {
      const auto cols = static_cast<std::size_t>(this->input_shape_.back());
      for (std::size_t r = 0; r * cols < dx.size(); ++r) {
        T dot = T(0);
        for (std::size_t j = 0; j < cols; ++j) dot += dy.data[r * cols + j] * post_.data[r * cols + j];
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t k = r * cols + j;
          dx.data[k] = post_.data[k] * (dy.data[k] - dot);
        }
      }
    } else {
      detail::pointwise_backward(act_, pre_.data, post_.data, dx.data);
    }
    return dx;
  }

  void describe(nlohmann::json& j) const override { j["activation"] = std::string(to_string(act_)); }

 private:
  Activation act_;
  Tensor<T> pre_, post_;
};

/// Builds a layer from its descriptor (the inverse of Layer::descriptor()).
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const nlohmann::json& d) {
  try {
    const auto type = d.at("type").get<std::string>();
    const auto name = d.at("name").get<std::string>();
    auto act = [&] { return parse_activation(d.value("activation", std::string("linear"))); };
    auto pad = [&] {
      const auto p = d.value("padding", std::string("same"));
      if (p != "same" && p != "valid") throw ModelError(name + ": unknown padding " + p);
      return p == "same" ? Padding::same : Padding::valid;
    };
    std::unique_ptr<Layer<T>> layer;
    if (type == "conv2d" || type == "conv1d") {
      layer = std::make_unique<ConvLayer<T>>(name, type == "conv1d", d.at("filters").get<int>(),
                                             d.at("kernel").get<int>(), pad(), act());
    } else if (type == "dense") {
      layer = std::make_unique<DenseLayer<T>>(name, d.at("units").get<int>(), act());
    } else if (type == "maxpool2d") {
      layer = std::make_unique<MaxPool2DLayer<T>>(name);
    } else if (type == "global_average_pool2d") {
      layer = std::make_unique<GlobalAveragePool2DLayer<T>>(name);
    } else if (type == "flatten") {
      layer = std::make_unique<FlattenLayer<T>>(name);
    } else if (type == "dropout") {
      layer = std::make_unique<DropoutLayer<T>>(name, d.at("rate").get<double>());
    } else if (type == "batch_norm") {
      layer = std::make_unique<BatchNormLayer<T>>(name);
    } else if (type == "activation") {
      layer = std::make_unique<ActivationLayer<T>>(name, act());
    } else {
      throw ModelError("unknown layer type '" + type + "'");
    }
    layer->trainable = d.value("trainable", true);
    return layer;
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("bad layer descriptor: ") + e.what());
  }
}

}  // namespace emo::nn
