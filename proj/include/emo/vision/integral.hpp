#pragma once

#include <cstdint>
#include <vector>

#include "emo/io/pgm.hpp"

namespace emo::vision {

/// (width+1) x (height+1) prefix sums of intensity and squared intensity.
/// Entry (x, y) holds the sum over pixels [0, x) x [0, y).
class IntegralImage {
 public:
  IntegralImage() = default;

  explicit IntegralImage(const io::GrayImage& img) : width_(img.width), height_(img.height) {
    const std::size_t stride = static_cast<std::size_t>(width_) + 1;
    sum_.assign(stride * (height_ + 1), 0);
    sq_.assign(stride * (height_ + 1), 0);
    for (int y = 0; y < height_; ++y) {
      std::int64_t row = 0;
      std::int64_t row_sq = 0;
      for (int x = 0; x < width_; ++x) {
        const std::int64_t v = img.at(x, y);
        row += v;
        row_sq += v * v;
        sum_[(y + 1) * stride + x + 1] = sum_[y * stride + x + 1] + row;
        sq_[(y + 1) * stride + x + 1] = sq_[y * stride + x + 1] + row_sq;
      }
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }

  std::int64_t at(int x, int y) const { return sum_[index(x, y)]; }

  /// Sum over [x, x+w) x [y, y+h). Zero-area rectangles sum to 0.
  std::int64_t rect_sum(int x, int y, int w, int h) const { return box(sum_, x, y, w, h); }
  std::int64_t rect_sq_sum(int x, int y, int w, int h) const { return box(sq_, x, y, w, h); }

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * (width_ + 1) + x; }

  std::int64_t box(const std::vector<std::int64_t>& t, int x, int y, int w, int h) const {
    return t[index(x + w, y + h)] - t[index(x, y + h)] - t[index(x + w, y)] + t[index(x, y)];
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::int64_t> sum_;
  std::vector<std::int64_t> sq_;
};

inline IntegralImage integral(const io::GrayImage& img) { return IntegralImage(img); }

}  // namespace emo::vision
