#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "emo/nn/layers.hpp"

namespace emo::nn {

enum class OptimizerKind { rmsprop, adam };

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "rmsprop"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw ModelError("unknown optimizer '" + std::string(s) + "'");
}

inline constexpr double kRmspropRho = 0.9;
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kOptimizerEpsilon = 1e-8;

/// Per-parameter accumulators live alongside the parameter list they were
/// created for; `step` must always receive that same list.
///   RMSProp: v = rho v + (1 - rho) g^2;  theta -= lr g / (sqrt(v) + eps)
///   Adam:    m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2;
///            theta -= lr m_hat / (sqrt(v_hat) + eps)
template <typename T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {
    if (!(learning_rate > 0.0)) throw ModelError("optimizer: learning rate must be positive");
  }

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  std::int64_t steps() const { return t_; }

  /// Updates every parameter in `params` from its accumulated gradient.
  void step(const std::vector<Param<T>*>& params) {
    if (first_.empty()) {
      for (const Param<T>* p : params) {
        first_.emplace_back(p->value.size(), 0.0);
        second_.emplace_back(p->value.size(), 0.0);
      }
    }
    if (first_.size() != params.size()) throw ShapeError("optimizer: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i];
      if (p.grad.size() != p.value.size() || first_[i].size() != p.value.size()) {
        throw ShapeError("optimizer: shape mismatch for " + p.name);
      }
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad.data[k];
        double delta;
        if (kind_ == OptimizerKind::rmsprop) {
          v[k] = kRmspropRho * v[k] + (1.0 - kRmspropRho) * g * g;
          delta = lr_ * g / (std::sqrt(v[k]) + kOptimizerEpsilon);
        } else {
          m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * g;
          v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * g * g;
          delta = lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + kOptimizerEpsilon);
        }
        p.value.data[k] = static_cast<T>(p.value.data[k] - delta);
      }
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> first_, second_;
};

}  // namespace emo::nn
