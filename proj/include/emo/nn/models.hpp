#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "emo/nn/train.hpp"

namespace emo::nn {

inline const std::vector<std::string> kFerLabels = {"angry", "happy", "neutral", "sad"};

inline constexpr std::array<std::string_view, 8> kSerEmotions = {"neutral", "calm",    "happy",   "sad",
                                                                 "angry",   "fearful", "disgust", "surprised"};
inline constexpr std::array<std::string_view, 2> kSerGenders = {"male", "female"};

/// SER class id = gender * 8 + emotion, named "<gender>_<emotion>".
inline int ser_class(int gender, int emotion) { return gender * 8 + emotion; }

inline std::vector<std::string> ser_labels() {
  std::vector<std::string> out;
  for (auto g : kSerGenders) {
    for (auto e : kSerEmotions) out.push_back(std::string(g) + "_" + std::string(e));
  }
  return out;
}

inline constexpr int kFerInputSize = 48;
inline constexpr int kSerInputLength = 66;
inline constexpr int kSerKernel = 5;
inline constexpr int kSerHiddenUnits = 128;

/// Layer names of the convolutional backbone (frozen during warm-up).
inline bool is_fer_backbone(std::string_view layer_name) { return layer_name.starts_with("block"); }

inline int scaled_width(int base, double multiplier) {
  return std::max(1, static_cast<int>(std::lround(base * multiplier)));
}

/// Five VGG-style blocks of 3x3 "same" ReLU convolutions, each closed by a
/// 2x2 max pool, then the classification head. Input 48x48x3.
template <typename T = float>
Network<T> build_fer(double width_multiplier = 1.0) {
  if (!(width_multiplier > 0.0 && width_multiplier <= 1.0)) {
    throw std::invalid_argument("build_fer: width multiplier must lie in (0, 1]");
  }
  constexpr std::array<int, 5> widths = {64, 128, 256, 512, 512};
  constexpr std::array<int, 5> convs = {2, 2, 3, 3, 3};
  Network<T> net;
  for (int b = 0; b < 5; ++b) {
    const std::string block = "block" + std::to_string(b + 1);
    for (int c = 0; c < convs[b]; ++c) {
      net.add(std::make_unique<ConvLayer<T>>(block + "_conv" + std::to_string(c + 1), false,
                                             scaled_width(widths[b], width_multiplier), 3, Padding::same,
                                             Activation::relu));
    }
    net.add(std::make_unique<MaxPool2DLayer<T>>(block + "_pool"));
  }
  net.add(std::make_unique<GlobalAveragePool2DLayer<T>>("global_average_pooling2d"));
  net.add(std::make_unique<FlattenLayer<T>>("flatten"));
  net.add(std::make_unique<DenseLayer<T>>("dense", 256, Activation::relu));
  net.add(std::make_unique<DropoutLayer<T>>("dropout", 0.4));
  net.add(std::make_unique<DenseLayer<T>>("dense_1", 128, Activation::relu));
  net.add(std::make_unique<DropoutLayer<T>>("dropout_1", 0.2));
  net.add(std::make_unique<DenseLayer<T>>("output", static_cast<int>(kFerLabels.size()), Activation::linear));
  net.add(std::make_unique<ActivationLayer<T>>("output_softmax", Activation::softmax));
  net.build({kFerInputSize, kFerInputSize, 3});
  net.metadata["labels"] = kFerLabels;
  net.metadata["width_multiplier"] = width_multiplier;
  return net;
}

/// Four Conv1D stages (kernel 5, "same") with SELU, batch normalization and
/// dropout, then two SELU dense layers and a 16-way softmax. Input (66, 1).
template <typename T = float>
Network<T> build_ser() {
  Network<T> net;
  auto conv = [&](const char* name, int filters) {
    net.add(std::make_unique<ConvLayer<T>>(name, true, filters, kSerKernel, Padding::same, Activation::linear));
  };
  auto act = [&](const char* name, Activation a = Activation::selu) {
    net.add(std::make_unique<ActivationLayer<T>>(name, a));
  };
  auto bn = [&](const char* name) { net.add(std::make_unique<BatchNormLayer<T>>(name)); };
  auto drop = [&](const char* name) { net.add(std::make_unique<DropoutLayer<T>>(name, 0.4)); };
  auto dense = [&](const char* name, int units) {
    net.add(std::make_unique<DenseLayer<T>>(name, units, Activation::linear));
  };

  conv("conv1d", 256);
  act("activation");
  conv("conv1d_1", 128);
  bn("batch_normalization");
  act("activation_1");
  drop("dropout");
  conv("conv1d_2", 64);
  act("activation_2");
  conv("conv1d_3", 64);
  bn("batch_normalization_1");
  act("activation_3");
  drop("dropout_1");
  net.add(std::make_unique<FlattenLayer<T>>("flatten"));
  dense("dense", kSerHiddenUnits);
  act("activation_4");
  dense("dense_1", kSerHiddenUnits);
  act("activation_5");
  bn("batch_normalization_2");
  act("activation_6");
  drop("dropout_2");
  dense("dense_2", 16);
  act("activation_7", Activation::softmax);
  net.build({kSerInputLength, 1});
  net.metadata["labels"] = ser_labels();
  return net;
}

/// Warm-up with the backbone frozen (RMSProp 1e-5, 30 epochs), then
/// fine-tuning of the whole network (Adam 1e-4, 25 epochs). Batch 64.
template <typename T = float>
TrainConfig<T> fer_schedule(const Network<T>& net, std::uint64_t seed) {
  TrainConfig<T> cfg;
  cfg.batch_size = 64;
  cfg.seed = seed;
  cfg.augment = true;
  Phase warm{OptimizerKind::rmsprop, 1e-5, 30, {}};
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (is_fer_backbone(net.layer(i).name())) warm.frozen.insert(net.layer(i).name());
  }
  cfg.phases = {warm, Phase{OptimizerKind::adam, 1e-4, 25, {}}};
  return cfg;
}

/// Adam 1e-3 for up to 65 epochs, batch 16, early stopping with patience 10.
template <typename T = float>
TrainConfig<T> ser_schedule(std::uint64_t seed) {
  TrainConfig<T> cfg;
  cfg.batch_size = 16;
  cfg.seed = seed;
  cfg.patience = 10;
  cfg.phases = {Phase{OptimizerKind::adam, 1e-3, 65, {}}};
  return cfg;
}

template <typename T>
nlohmann::json describe_schedule(const TrainConfig<T>& cfg) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& p : cfg.phases) phases.push_back(to_json(p));
  nlohmann::json j = {{"batch_size", cfg.batch_size}, {"seed", cfg.seed}, {"patience", cfg.patience},
                      {"augment", cfg.augment}, {"phases", std::move(phases)}};
  if (cfg.stop_at_train_accuracy) j["stop_at_train_accuracy"] = *cfg.stop_at_train_accuracy;
  return j;
}

}  // namespace emo::nn
