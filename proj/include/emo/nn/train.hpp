#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "emo/nn/network.hpp"
#include "emo/nn/optimizer.hpp"

namespace emo::nn {

/// Samples stacked along the leading axis of `inputs`, with class ids.
template <typename T>
struct Dataset {
  Tensor<T> inputs;
  std::vector<int> labels;
  /// Optional per-sample transform used when training with augmentation:
  /// writes a fresh version of sample `index` into `out`.
  std::function<void(std::size_t index, Rng& rng, T* out)> augmenter;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

struct Phase {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  int epochs = 1;
  /// Names of layers held fixed during this phase.
  std::set<std::string> frozen;
};

struct EpochRecord {
  int epoch = 0;  // 1-based, counted across phases
  int phase = 0;  // 0-based
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

template <typename T>
struct TrainConfig {
  int batch_size = 32;
  std::uint64_t seed = 0;
  /// Non-improving epochs tolerated per phase; negative disables early stopping.
  int patience = -1;
  std::vector<Phase> phases;
  bool augment = false;
  /// Ends training once the epoch's running train accuracy reaches this value.
  std::optional<double> stop_at_train_accuracy;
  /// Called after each epoch's bookkeeping; may modify the network.
  std::function<void(const EpochRecord&, Network<T>&)> on_epoch_end;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_accuracy = 0.0;
  /// "val_accuracy" or "accuracy" when there is no validation data.
  std::string monitor;
};

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t total = 0;
  /// confusion[truth][prediction]
  std::vector<std::vector<std::size_t>> confusion;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"phase", r.phase}, {"loss", r.loss}, {"accuracy", r.accuracy}};
  if (r.val_loss) j["val_loss"] = *r.val_loss;
  if (r.val_accuracy) j["val_accuracy"] = *r.val_accuracy;
  return j;
}

inline nlohmann::json to_json(const TrainResult& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.history) epochs.push_back(to_json(e));
  return {{"epochs", std::move(epochs)},
          {"best_epoch", r.best_epoch},
          {"best_accuracy", r.best_accuracy},
          {"monitor", r.monitor}};
}

inline nlohmann::json to_json(const Evaluation& e, const std::vector<std::string>& labels = {}) {
  nlohmann::json j = {{"accuracy", e.accuracy}, {"loss", e.loss}, {"total", e.total}, {"confusion", e.confusion}};
  if (!labels.empty()) j["labels"] = labels;
  return j;
}

inline nlohmann::json to_json(const Phase& p) {
  return {{"optimizer", std::string(to_string(p.optimizer))},
          {"learning_rate", p.learning_rate},
          {"epochs", p.epochs},
          {"frozen", p.frozen}};
}

namespace detail {

template <typename T>
void gather(const Dataset<T>& data, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end,
            Rng* augment_rng, Tensor<T>& x, std::vector<int>& y) {
  const std::size_t per = data.inputs.sample_size();
  Shape s = data.inputs.shape;
  s[0] = static_cast<int>(end - begin);
  x = Tensor<T>(s);
  y.resize(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    T* dst = x.data.data() + (i - begin) * per;
    if (augment_rng != nullptr && data.augmenter) {
      data.augmenter(idx[i], *augment_rng, dst);
    } else {
      const T* src = data.inputs.sample(static_cast<int>(idx[i]));
      std::copy(src, src + per, dst);
    }
    y[i - begin] = data.labels[idx[i]];
  }
}

template <typename T>
int argmax_row(const T* row, int n) {
  return static_cast<int>(std::max_element(row, row + n) - row);
}

}  // namespace detail

/// Inference-mode accuracy, mean cross-entropy and confusion matrix.
template <typename T>
Evaluation evaluate(Network<T>& net, const Dataset<T>& data, int batch_size = 64) {
  if (data.empty()) throw DataError("evaluate: empty split");
  const int classes = net.output_shape().back();
  Evaluation ev;
  ev.total = data.size();
  ev.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::size_t correct = 0;
  double loss = 0.0;
  Tensor<T> x;
  std::vector<int> y;
  for (std::size_t b = 0; b < idx.size(); b += batch_size) {
    const std::size_t e = std::min(idx.size(), b + batch_size);
    detail::gather(data, idx, b, e, nullptr, x, y);
    const auto res = softmax_cross_entropy(net.forward_logits(x), y);
    loss += res.loss * static_cast<double>(e - b);
    for (std::size_t i = 0; i < e - b; ++i) {
      const int pred = detail::argmax_row(res.probabilities.sample(static_cast<int>(i)), classes);
      ++ev.confusion.at(y[i]).at(pred);
      correct += pred == y[i];
    }
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.total);
  ev.loss = loss / static_cast<double>(ev.total);
  return ev;
}

/// Mini-batch training over the configured phases. Each epoch visits the
/// training set in an order drawn from the "shuffle" stream. The weights
/// with the best monitored accuracy (validation, else training) seen at
/// any epoch end are restored into `net` before returning.
template <typename T>
TrainResult train(Network<T>& net, const Dataset<T>& train_set, const Dataset<T>& val_set, const TrainConfig<T>& cfg) {
  if (train_set.empty()) throw DataError("train: empty dataset");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (cfg.phases.empty()) throw std::invalid_argument("train: no phases");
  for (const Phase& p : cfg.phases) {
    if (p.epochs < 0) throw std::invalid_argument("train: negative epoch count");
    for (const auto& name : p.frozen) {
      if (net.find(name) == nullptr) throw std::invalid_argument("train: frozen layer '" + name + "' not in network");
    }
  }
  net.check_classifier();

  Rng shuffle_rng(cfg.seed, "shuffle");
  Rng dropout_rng(cfg.seed, "dropout");
  Rng augment_rng(cfg.seed, "augment");
  const ForwardContext ctx{true, &dropout_rng};
  const int classes = net.output_shape().back();

  TrainResult result;
  result.monitor = val_set.empty() ? "accuracy" : "val_accuracy";
  double best = -1.0;
  auto best_weights = net.snapshot();
  std::vector<std::size_t> order(train_set.size());
  Tensor<T> x;
  std::vector<int> y;
  bool stop_all = false;
  int epoch = 0;

  for (std::size_t ph = 0; ph < cfg.phases.size() && !stop_all; ++ph) {
    const Phase& phase = cfg.phases[ph];
    net.set_trainable([&](const Layer<T>& l) { return !phase.frozen.contains(l.name()); });
    Optimizer<T> opt(phase.optimizer, phase.learning_rate);
    const auto params = net.trainable_params();
    double phase_best = -1.0;
    int wait = 0;
    for (int e = 0; e < phase.epochs; ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle_rng.shuffle(order);
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), b + cfg.batch_size);
        detail::gather(train_set, order, b, end, cfg.augment ? &augment_rng : nullptr, x, y);
        net.zero_grad();
        const auto res = softmax_cross_entropy(net.forward_logits(x, ctx), y);
        net.backward(res.grad_logits);
        opt.step(params);
        loss_sum += res.loss * static_cast<double>(end - b);
        for (std::size_t i = 0; i < end - b; ++i) {
          correct += detail::argmax_row(res.probabilities.sample(static_cast<int>(i)), classes) == y[i];
        }
      }
      EpochRecord rec;
      rec.epoch = ++epoch;
      rec.phase = static_cast<int>(ph);
      rec.loss = loss_sum / static_cast<double>(train_set.size());
      rec.accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
      if (!val_set.empty()) {
        const Evaluation ev = evaluate(net, val_set, std::max(cfg.batch_size, 64));
        rec.val_loss = ev.loss;
        rec.val_accuracy = ev.accuracy;
      }
      const double monitored = rec.val_accuracy.value_or(rec.accuracy);
      if (monitored > best) {
        best = monitored;
        best_weights = net.snapshot();
        result.best_epoch = rec.epoch;
        result.best_accuracy = monitored;
      }
      result.history.push_back(rec);
      if (cfg.on_epoch_end) cfg.on_epoch_end(rec, net);

      if (cfg.stop_at_train_accuracy && rec.accuracy >= *cfg.stop_at_train_accuracy) {
        stop_all = true;
        break;
      }
      if (monitored > phase_best) {
        phase_best = monitored;
        wait = 0;
      } else {
        ++wait;
      }
      if (cfg.patience >= 0 && wait >= cfg.patience) break;
    }
  }
  net.restore(best_weights);
  net.set_trainable([](const Layer<T>&) { return true; });
  return result;
}

}  // namespace emo::nn
