#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "emo/io/model_file.hpp"
#include "emo/nn/layers.hpp"
#include "emo/nn/loss.hpp"

namespace emo::nn {

/// Ordered stack of layers with a fixed per-sample input shape.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Layer<T>& add(std::unique_ptr<Layer<T>> layer) {
    layers_.push_back(std::move(layer));
    built_ = false;
    return *layers_.back();
  }

  /// Propagates shapes from `input` through every layer and sizes parameters.
  void build(const Shape& input) {
    if (layers_.empty()) throw ModelError("network: no layers");
    input_shape_ = input;
    Shape s = input;
    for (auto& l : layers_) s = l->build(s);
    output_shape_ = s;
    built_ = true;
  }

  /// He-uniform weights, zero biases, unit BatchNorm scales; drawn from the
  /// "init" stream of `seed` in layer order.
  void initialize(std::uint64_t seed) {
    require_built();
    Rng rng(seed, "init");
    for (auto& l : layers_) l->initialize(rng);
  }

  /// Classifier contract: exactly one softmax, and it is the last layer.
  void check_classifier() const {
    int softmaxes = 0;
    for (const auto& l : layers_) {
      if (const auto* a = dynamic_cast<const ActivationLayer<T>*>(l.get()); a && a->activation() == Activation::softmax) {
        ++softmaxes;
      }
    }
    if (softmaxes != 1 || !ends_in_softmax()) throw ModelError("network: classifier needs exactly one terminal softmax");
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx = {}) { return run(x, ctx, layers_.size()); }

  /// Output of the layer before a terminal softmax (the whole stack otherwise).
  Tensor<T> forward_logits(const Tensor<T>& x, const ForwardContext& ctx = {}) {
    return run(x, ctx, logits_end());
  }

  /// Back-propagates d loss / d logits. Layers below the first trainable
  /// parameterized layer are skipped since nothing there is updated.
  void backward(const Tensor<T>& grad_logits) {
    const std::size_t end = logits_end();
    const std::size_t lowest = first_trainable_layer();
    Tensor<T> g = grad_logits;
    for (std::size_t i = end; i-- > lowest;) g = layers_[i]->backward(g, i > lowest);
  }

  /// Backward including the input gradient of layer 0 (used for gradient checks).
  Tensor<T> backward_to_input(const Tensor<T>& grad_out, bool through_softmax = true) {
    Tensor<T> g = grad_out;
    for (std::size_t i = through_softmax ? layers_.size() : logits_end(); i-- > 0;) g = layers_[i]->backward(g, true);
    return g;
  }

  void zero_grad() {
    for (auto& l : layers_) {
      for (Param<T>* p : l->params()) p->grad.fill(T(0));
    }
  }

  std::vector<Param<T>*> all_params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      for (Param<T>* p : l->params()) out.push_back(p);
    }
    return out;
  }

  /// Learnable parameters of layers whose trainable flag is set.
  std::vector<Param<T>*> trainable_params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      if (!l->trainable) continue;
      for (Param<T>* p : l->params()) {
        if (p->learnable) out.push_back(p);
      }
    }
    return out;
  }

  /// Sets every layer's trainable flag from `pred(layer)`.
  void set_trainable(const std::function<bool(const Layer<T>&)>& pred) {
    for (auto& l : layers_) l->trainable = pred(*l);
  }

  using Snapshot = std::vector<std::vector<T>>;

  Snapshot snapshot() {
    Snapshot s;
    for (Param<T>* p : all_params()) s.push_back(p->value.data);
    return s;
  }

  void restore(const Snapshot& s) {
    auto ps = all_params();
    if (ps.size() != s.size()) throw ModelError("network: snapshot does not match parameters");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i]->value.size() != s[i].size()) throw ModelError("network: snapshot does not match " + ps[i]->name);
      ps[i]->value.data = s[i];
    }
  }

  io::ModelFile to_model_file() const {
    io::ModelFile mf;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_) layers.push_back(l->descriptor());
    mf.header = metadata;
    mf.header["layers"] = std::move(layers);
    mf.header["input_shape"] = input_shape_;
    for (const auto& l : layers_) {
      for (Param<T>* p : l->params()) {
        io::Blob b;
        b.name = p->name;
        b.shape.assign(p->value.shape.begin(), p->value.shape.end());
        b.values.assign(p->value.data.begin(), p->value.data.end());
        mf.blobs.push_back(std::move(b));
      }
    }
    return mf;
  }

  /// Rebuilds layers from the header and loads every parameter by name.
  /// Each parameter must be present with a matching shape.
  static Network from_model_file(const io::ModelFile& mf) {
    Network net;
    try {
      for (const auto& d : mf.header.at("layers")) net.add(make_layer<T>(d));
      net.build(mf.header.at("input_shape").get<Shape>());
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("model: bad header: ") + e.what());
    } catch (const ShapeError& e) {
      throw ModelError(std::string("model: shape mismatch: ") + e.what());
    }
    std::map<std::string, const io::Blob*> by_name;
    for (const auto& b : mf.blobs) {
      if (!by_name.emplace(b.name, &b).second) throw ModelError("model: duplicate blob " + b.name);
    }
    for (Param<T>* p : net.all_params()) {
      auto it = by_name.find(p->name);
      if (it == by_name.end()) throw ModelError("model: missing blob " + p->name);
      const io::Blob& b = *it->second;
      if (!std::equal(b.shape.begin(), b.shape.end(), p->value.shape.begin(), p->value.shape.end())) {
        throw ModelError("model: shape mismatch in blob " + p->name);
      }
      p->value.data.assign(b.values.begin(), b.values.end());
      by_name.erase(it);
    }
    if (!by_name.empty()) throw ModelError("model: unexpected blob " + by_name.begin()->first);
    net.metadata = mf.header;
    for (const char* key : {"layers", "input_shape", "blobs"}) net.metadata.erase(key);
    return net;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
  Layer<T>* find(const std::string& name) {
    for (auto& l : layers_) {
      if (l->name() == name) return l.get();
    }
    return nullptr;
  }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }

  std::vector<std::string> labels() const {
    return metadata.contains("labels") ? metadata["labels"].get<std::vector<std::string>>() : std::vector<std::string>{};
  }

  /// Free-form header fields: "labels", "hyperparameters", "preprocess".
  nlohmann::json metadata = nlohmann::json::object();

 private:
  void require_built() const {
    if (!built_) throw ModelError("network: build() has not been called");
  }

  bool ends_in_softmax() const {
    if (layers_.empty()) return false;
    const auto* a = dynamic_cast<const ActivationLayer<T>*>(layers_.back().get());
    return a != nullptr && a->activation() == Activation::softmax;
  }

  std::size_t logits_end() const { return ends_in_softmax() ? layers_.size() - 1 : layers_.size(); }

  std::size_t first_trainable_layer() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (!layers_[i]->trainable) continue;
      for (Param<T>* p : layers_[i]->params()) {
        if (p->learnable) return i;
      }
    }
    return layers_.size();
  }

  Tensor<T> run(const Tensor<T>& x, const ForwardContext& ctx, std::size_t end) {
    require_built();
    Tensor<T> h = x;
    for (std::size_t i = 0; i < end; ++i) h = layers_[i]->forward(h, ctx);
    return h;
  }

  std::vector<std::unique_ptr<Layer<T>>> layers_;
  Shape input_shape_, output_shape_;
  bool built_ = false;
};

}  // namespace emo::nn
