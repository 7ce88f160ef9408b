#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "emo/nn/layers.hpp"

namespace emo::nn {

inline constexpr double kProbabilityFloor = 1e-12;

/// Row-wise softmax of [N, C] logits.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.shape.size() != 2) throw ShapeError("softmax: expected [N, C], got " + to_string(logits.shape));
  Tensor<T> q = logits;
  detail::softmax_rows(q.data, static_cast<std::size_t>(q.dim(1)));
  return q;
}

/// Categorical cross-entropy of one distribution: -sum p_i log q_i.
inline double cross_entropy(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ShapeError("cross_entropy: length mismatch");
  double h = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] != 0.0) h -= p[i] * std::log(std::max(q[i], kProbabilityFloor));
  }
  return h;
}

template <typename T>
struct LossResult {
  double loss = 0.0;      // mean over the batch
  Tensor<T> probabilities;
  Tensor<T> grad_logits;  // d(mean loss)/d logits = (q - p) / N
};

/// Softmax followed by cross-entropy against integer class labels.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  LossResult<T> r;
  r.probabilities = softmax(logits);
  const int n = logits.dim(0);
  const int c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n) throw ShapeError("loss: label count does not match batch");
  r.grad_logits = r.probabilities;
  for (int s = 0; s < n; ++s) {
    const int y = labels[s];
    if (y < 0 || y >= c) throw ShapeError("loss: label out of range");
    const T* q = r.probabilities.sample(s);
    r.loss -= std::log(std::max(static_cast<double>(q[y]), kProbabilityFloor));
    T* g = r.grad_logits.sample(s);
    g[y] -= T(1);
    for (int j = 0; j < c; ++j) g[j] /= static_cast<T>(n);
  }
  r.loss /= n;
  return r;
}

}  // namespace emo::nn
