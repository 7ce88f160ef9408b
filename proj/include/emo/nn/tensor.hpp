#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "emo/error.hpp"

namespace emo::nn {

using Shape = std::vector<int>;

inline std::size_t shape_elements(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string to_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

/// Dense row-major array. The leading axis is the batch axis wherever a
/// tensor carries samples.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_elements(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_elements(shape)) throw ShapeError("tensor: value count does not match " + to_string(shape));
  }

  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
  int batch() const { return shape.empty() ? 0 : shape[0]; }
  /// Elements per sample (everything after the batch axis).
  std::size_t sample_size() const { return shape.empty() ? 0 : data.size() / static_cast<std::size_t>(shape[0]); }

  T* sample(int n) { return data.data() + static_cast<std::size_t>(n) * sample_size(); }
  const T* sample(int n) const { return data.data() + static_cast<std::size_t>(n) * sample_size(); }

  T& operator[](std::size_t i) { return data[i]; }
  T operator[](std::size_t i) const { return data[i]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  Tensor reshaped(Shape s) const {
    if (shape_elements(s) != data.size()) throw ShapeError("tensor: cannot reshape to " + to_string(s));
    return Tensor(std::move(s), data);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Batched shape = batch size followed by the per-sample shape.
inline Shape batched(int n, const Shape& per_sample) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

}  // namespace emo::nn
