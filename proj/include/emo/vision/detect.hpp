#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <tuple>
#include <vector>

#include "emo/vision/cascade.hpp"

namespace emo::vision {

struct Detection {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  int neighbor_count = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectOptions {
  double scale_factor = 1.1;
  int min_neighbors = 3;
  double merge_iou = 0.3;
};

inline double iou(const Detection& a, const Detection& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Bilinear resample to `w` x `h` with pixel-centre alignment; source
/// coordinates are clamped at the border and results rounded.
inline io::GrayImage resize_level(const io::GrayImage& img, int w, int h) {
  io::GrayImage out(w, h);
  const double sx = static_cast<double>(img.width) / w;
  const double sy = static_cast<double>(img.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double ay = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double ax = fx - x0;
      const double top = (1.0 - ax) * img.at(x0, y0) + ax * img.at(x1, y0);
      const double bottom = (1.0 - ax) * img.at(x0, y1) + ax * img.at(x1, y1);
      out.at(x, y) = static_cast<std::uint8_t>(std::lround((1.0 - ay) * top + ay * bottom));
    }
  }
  return out;
}

/// Window positions, at every pyramid level, that pass all stages, mapped
/// back to source coordinates. Levels shrink the image by `scale_factor`
/// until it no longer holds one window. Positions advance by 2 pixels while
/// the level scale is at most 2 and by 1 pixel beyond that.
inline std::vector<Detection> raw_detections(const io::GrayImage& image, const CascadeModel& cascade,
                                             double scale_factor) {
  std::vector<Detection> hits;
  for (double scale = 1.0;; scale *= scale_factor) {
    const int w = static_cast<int>(std::lround(image.width / scale));
    const int h = static_cast<int>(std::lround(image.height / scale));
    if (w < cascade.window_width || h < cascade.window_height) break;
    const io::GrayImage level = scale == 1.0 ? image : resize_level(image, w, h);
    const IntegralImage ii(level);
    const double sx = static_cast<double>(image.width) / w;
    const double sy = static_cast<double>(image.height) / h;
    const int step = scale > 2.0 ? 1 : 2;
    for (int y = 0; y + cascade.window_height <= h; y += step) {
      for (int x = 0; x + cascade.window_width <= w; x += step) {
        if (!window_passes(cascade, ii, x, y)) continue;
        Detection d;
        d.x = static_cast<int>(std::lround(x * sx));
        d.y = static_cast<int>(std::lround(y * sy));
        d.w = std::min(image.width - d.x, static_cast<int>(std::lround(cascade.window_width * sx)));
        d.h = std::min(image.height - d.y, static_cast<int>(std::lround(cascade.window_height * sy)));
        hits.push_back(d);
      }
    }
    if (scale_factor <= 1.0) break;
  }
  return hits;
}

/// Clusters raw hits (IoU >= merge_iou links two hits), averages each cluster
/// and keeps clusters with at least `min_neighbors` members. A cluster whose
/// box lies inside a stronger cluster's box is dropped. Sorted by (y, x, w).
inline std::vector<Detection> group_detections(const std::vector<Detection>& hits, const DetectOptions& opt) {
  const std::size_t n = hits.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (iou(hits[i], hits[j]) >= opt.merge_iou) parent[find(i)] = find(j);
    }
  }

  std::vector<std::size_t> root_slot(n, n);
  std::vector<std::array<double, 4>> sums;
  std::vector<int> counts;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (root_slot[r] == n) {
      root_slot[r] = sums.size();
      sums.push_back({0, 0, 0, 0});
      counts.push_back(0);
    }
    auto& s = sums[root_slot[r]];
    s[0] += hits[i].x;
    s[1] += hits[i].y;
    s[2] += hits[i].w;
    s[3] += hits[i].h;
    ++counts[root_slot[r]];
  }

  std::vector<Detection> groups;
  for (std::size_t g = 0; g < sums.size(); ++g) {
    if (counts[g] < opt.min_neighbors) continue;
    const double c = counts[g];
    groups.push_back({static_cast<int>(std::lround(sums[g][0] / c)), static_cast<int>(std::lround(sums[g][1] / c)),
                      static_cast<int>(std::lround(sums[g][2] / c)), static_cast<int>(std::lround(sums[g][3] / c)),
                      counts[g]});
  }

  std::vector<Detection> kept;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const Detection& a = groups[i];
    bool nested = false;
    for (std::size_t j = 0; j < groups.size() && !nested; ++j) {
      const Detection& b = groups[j];
      const bool stronger = b.neighbor_count > a.neighbor_count || (b.neighbor_count == a.neighbor_count && j < i);
      nested = j != i && stronger && a.x >= b.x && a.y >= b.y && a.x + a.w <= b.x + b.w && a.y + a.h <= b.y + b.h;
    }
    if (!nested) kept.push_back(a);
  }
  std::sort(kept.begin(), kept.end(),
            [](const Detection& a, const Detection& b) { return std::tie(a.y, a.x, a.w) < std::tie(b.y, b.x, b.w); });
  return kept;
}

inline std::vector<Detection> detect_faces(const io::GrayImage& image, const CascadeModel& cascade,
                                           const DetectOptions& opt = {}) {
  if (image.width < cascade.window_width || image.height < cascade.window_height) {
    throw DataError("detect: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    " is smaller than the cascade window");
  }
  if (!(opt.scale_factor > 1.0)) throw std::invalid_argument("detect: scale factor must exceed 1");
  if (opt.min_neighbors < 1) throw std::invalid_argument("detect: min_neighbors must be >= 1");
  return group_detections(raw_detections(image, cascade, opt.scale_factor), opt);
}

}  // namespace emo::vision
