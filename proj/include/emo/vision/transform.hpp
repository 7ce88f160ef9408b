#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "emo/rng.hpp"
#include "emo/vision/detect.hpp"

namespace emo::vision {

inline constexpr int kFaceSize = 48;

namespace detail {

// Bilinear sample with edge clamping, rounded to the nearest intensity.
inline std::uint8_t sample_bilinear(const io::GrayImage& img, double sx, double sy, int x0, int y0, int x1, int y1) {
  sx = std::clamp(sx, static_cast<double>(x0), static_cast<double>(x1));
  sy = std::clamp(sy, static_cast<double>(y0), static_cast<double>(y1));
  const int ix = std::min(static_cast<int>(std::floor(sx)), x1);
  const int iy = std::min(static_cast<int>(std::floor(sy)), y1);
  const int jx = std::min(ix + 1, x1);
  const int jy = std::min(iy + 1, y1);
  const double fx = sx - ix;
  const double fy = sy - iy;
  const double top = img.at(ix, iy) * (1.0 - fx) + img.at(jx, iy) * fx;
  const double bottom = img.at(ix, jy) * (1.0 - fx) + img.at(jx, jy) * fx;
  return static_cast<std::uint8_t>(std::clamp(std::lround(top * (1.0 - fy) + bottom * fy), 0L, 255L));
}

}  // namespace detail

/// Bilinear resample of the detection box to `size` x `size`, pixel-center
/// aligned: output pixel i samples box coordinate (i + 0.5) * box/size - 0.5.
inline io::GrayImage crop_and_resize(const io::GrayImage& image, const Detection& box, int size = kFaceSize) {
  if (box.w <= 0 || box.h <= 0 || box.x < 0 || box.y < 0 || box.x + box.w > image.width ||
      box.y + box.h > image.height) {
    throw DataError("crop: box outside image");
  }
  io::GrayImage out(size, size);
  const double kx = static_cast<double>(box.w) / size;
  const double ky = static_cast<double>(box.h) / size;
  for (int y = 0; y < size; ++y) {
    const double sy = box.y + (y + 0.5) * ky - 0.5;
    for (int x = 0; x < size; ++x) {
      const double sx = box.x + (x + 0.5) * kx - 0.5;
      out.at(x, y) = detail::sample_bilinear(image, sx, sy, box.x, box.y, box.x + box.w - 1, box.y + box.h - 1);
    }
  }
  return out;
}

/// Resize of the whole image (used when dataset images are not yet 48x48).
inline io::GrayImage resize_bilinear(const io::GrayImage& image, int size = kFaceSize) {
  return crop_and_resize(image, Detection{0, 0, image.width, image.height, 0}, size);
}

struct AugmentParams {
  double rotation_deg = 0.0;
  double zoom = 1.0;
  bool flip = false;
};

struct AugmentRanges {
  double max_rotation_deg = 15.0;
  double max_zoom = 1.15;
  double flip_probability = 0.5;
};

inline AugmentParams draw_augment_params(Rng& rng, const AugmentRanges& r = {}) {
  AugmentParams p;
  p.rotation_deg = rng.uniform(-r.max_rotation_deg, r.max_rotation_deg);
  p.zoom = rng.uniform(1.0, r.max_zoom);
  p.flip = rng.bernoulli(r.flip_probability);
  return p;
}

inline io::GrayImage flip_horizontal(const io::GrayImage& img) {
  io::GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(img.width - 1 - x, y);
  }
  return out;
}

/// Rotation about the image center and zoom-in, then optional mirror.
/// Samples falling outside the source take the nearest edge pixel.
inline io::GrayImage apply_augment(const io::GrayImage& img, const AugmentParams& p) {
  io::GrayImage out(img.width, img.height);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  const double rad = p.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad) / p.zoom;
  const double s = std::sin(rad) / p.zoom;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // Inverse map: output pixel -> source coordinate.
      const double dx = x - cx;
      const double dy = y - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      out.at(x, y) = detail::sample_bilinear(img, sx, sy, 0, 0, img.width - 1, img.height - 1);
    }
  }
  return p.flip ? flip_horizontal(out) : out;
}

/// Seeded augmentation: rotation in [-15, 15] degrees, zoom in [1, 1.15],
/// mirror with probability 0.5.
inline io::GrayImage augment(const io::GrayImage& img, std::uint64_t seed) {
  Rng rng(seed, "augment");
  return apply_augment(img, draw_augment_params(rng));
}

}  // namespace emo::vision
