#pragma once

#include <optional>
#include <stdexcept>
#include <type_traits>

#include "emo/affect/decision.hpp"

namespace emo::affect {

template <typename Label>
constexpr Label initial_label() {
  if constexpr (std::is_same_v<Label, Mood>) {
    return Mood::neutral;
  } else {
    return Label{};
  }
}

/// Debounces a label stream: the stable label switches only after `n`
/// consecutive identical labels that differ from it.
template <typename Label = Mood>
class Hysteresis {
 public:
  struct Update {
    Label stable;
    bool changed = false;
  };

  explicit Hysteresis(int n = 3, Label initial = initial_label<Label>()) : n_(n), stable_(initial) {
    if (n < 1) throw std::invalid_argument("hysteresis: N must be >= 1");
  }

  Update update(Label label) {
    if (label == stable_) {
      candidate_.reset();
      count_ = 0;
      return {stable_, false};
    }
    if (candidate_ == label) {
      ++count_;
    } else {
      candidate_ = label;
      count_ = 1;
    }
    if (count_ >= n_) {
      stable_ = label;
      candidate_.reset();
      count_ = 0;
      return {stable_, true};
    }
    return {stable_, false};
  }

  Label stable() const { return stable_; }
  int threshold() const { return n_; }

 private:
  int n_;
  Label stable_;
  std::optional<Label> candidate_;
  int count_ = 0;
};

}  // namespace emo::affect
