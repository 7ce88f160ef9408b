#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include <json.hpp>

#include "emo/dsp/features.hpp"
#include "emo/io/manifest.hpp"
#include "emo/io/pgm.hpp"
#include "emo/io/wav.hpp"
#include "emo/nn/models.hpp"
#include "emo/vision/transform.hpp"

namespace emo::nn {

/// Grayscale face -> 48x48x3 input, intensities scaled to [0, 1] and the
/// single channel replicated three times. Other sizes are resized first.
template <typename T = float>
void face_to_input(const io::GrayImage& face, T* out) {
  const io::GrayImage img = (face.width == kFerInputSize && face.height == kFerInputSize)
                                ? face
                                : vision::resize_bilinear(face, kFerInputSize);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const T v = static_cast<T>(img.pixels[i]) / T(255);
    out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = v;
  }
}

template <typename T = float>
Tensor<T> face_tensor(const io::GrayImage& face) {
  Tensor<T> x({1, kFerInputSize, kFerInputSize, 3});
  face_to_input(face, x.data.data());
  return x;
}

/// In-memory FER dataset with an augmenter that rotates, zooms and mirrors
/// the stored faces.
template <typename T = float>
Dataset<T> make_fer_dataset(std::vector<io::GrayImage> faces, std::vector<int> labels) {
  if (faces.size() != labels.size()) throw DataError("fer dataset: image and label counts differ");
  auto stored = std::make_shared<std::vector<io::GrayImage>>();
  for (auto& f : faces) {
    stored->push_back(f.width == kFerInputSize && f.height == kFerInputSize ? std::move(f)
                                                                           : vision::resize_bilinear(f, kFerInputSize));
  }
  Dataset<T> d;
  d.inputs = Tensor<T>({static_cast<int>(stored->size()), kFerInputSize, kFerInputSize, 3});
  for (std::size_t i = 0; i < stored->size(); ++i) face_to_input((*stored)[i], d.inputs.sample(static_cast<int>(i)));
  d.labels = std::move(labels);
  d.augmenter = [stored](std::size_t i, Rng& rng, T* out) {
    face_to_input(vision::apply_augment((*stored)[i], vision::draw_augment_params(rng)), out);
  };
  return d;
}

template <typename T = float>
Dataset<T> load_fer_split(const io::Manifest& m, io::Split split) {
  std::vector<io::GrayImage> faces;
  std::vector<int> labels;
  for (const auto& r : m.in_split(split)) {
    faces.push_back(io::decode_pgm(io::read_file(m.resolve(r))));
    labels.push_back(r.label_id);
  }
  return make_fer_dataset<T>(std::move(faces), std::move(labels));
}

/// Per-feature affine standardization fitted on training vectors.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const std::vector<dsp::FeatureVector>& xs) {
    Standardizer s;
    s.mean.assign(dsp::kFeatureLength, 0.0);
    s.scale.assign(dsp::kFeatureLength, 1.0);
    if (xs.empty()) return s;
    const auto n = static_cast<double>(xs.size());
    for (const auto& x : xs) {
      for (std::size_t i = 0; i < x.size(); ++i) s.mean[i] += x[i] / n;
    }
    for (std::size_t i = 0; i < dsp::kFeatureLength; ++i) {
      double var = 0.0;
      for (const auto& x : xs) var += (x[i] - s.mean[i]) * (x[i] - s.mean[i]) / n;
      const double sd = std::sqrt(var);
      s.scale[i] = sd > 1e-8 ? sd : 1.0;
    }
    return s;
  }

  template <typename T>
  void apply(const dsp::FeatureVector& x, T* out) const {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>((x[i] - mean[i]) / scale[i]);
  }

  nlohmann::json to_json() const { return {{"mean", mean}, {"scale", scale}}; }

  /// Identity when the model carries no "preprocess" entry.
  static Standardizer from_json(const nlohmann::json& j) {
    Standardizer s;
    s.mean.assign(dsp::kFeatureLength, 0.0);
    s.scale.assign(dsp::kFeatureLength, 1.0);
    if (j.is_null()) return s;
    try {
      s.mean = j.at("mean").get<std::vector<double>>();
      s.scale = j.at("scale").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("model: bad preprocess entry: ") + e.what());
    }
    if (s.mean.size() != dsp::kFeatureLength || s.scale.size() != dsp::kFeatureLength) {
      throw ModelError("model: preprocess length does not match feature length");
    }
    return s;
  }
};

template <typename T = float>
Dataset<T> make_ser_dataset(const std::vector<dsp::FeatureVector>& xs, std::vector<int> labels, const Standardizer& st) {
  if (xs.size() != labels.size()) throw DataError("ser dataset: vector and label counts differ");
  Dataset<T> d;
  d.inputs = Tensor<T>({static_cast<int>(xs.size()), kSerInputLength, 1});
  for (std::size_t i = 0; i < xs.size(); ++i) st.apply(xs[i], d.inputs.sample(static_cast<int>(i)));
  d.labels = std::move(labels);
  return d;
}

template <typename T = float>
Tensor<T> feature_tensor(const dsp::FeatureVector& fv, const Standardizer& st) {
  Tensor<T> x({1, kSerInputLength, 1});
  st.apply(fv, x.data.data());
  return x;
}

struct FeatureSplit {
  std::vector<dsp::FeatureVector> features;
  std::vector<int> labels;
};

inline FeatureSplit load_ser_features(const io::Manifest& m, io::Split split) {
  FeatureSplit out;
  for (const auto& r : m.in_split(split)) {
    out.features.push_back(dsp::extract_features(io::decode_wav(io::read_file(m.resolve(r)))));
    out.labels.push_back(r.label_id);
  }
  return out;
}

}  // namespace emo::nn
