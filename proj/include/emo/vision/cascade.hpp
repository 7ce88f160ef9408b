#pragma once

#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "emo/error.hpp"
#include "emo/vision/integral.hpp"

namespace emo::vision {

struct HaarRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  double weight = 0.0;
};

/// Up to three weighted rectangles. Weights are area-compensated: the
/// weighted areas sum to zero, so a constant offset never changes the value.
struct HaarFeature {
  std::vector<HaarRect> rects;
};

/// Decision tree over Haar features. Child index <= 0 denotes leaf -child.
struct TreeNode {
  int left = 0;
  int right = 0;
  int feature = 0;
  double threshold = 0.0;
};

struct WeakClassifier {
  std::vector<TreeNode> nodes;
  std::vector<double> leaves;
};

struct Stage {
  double threshold = 0.0;
  std::vector<WeakClassifier> classifiers;
};

struct CascadeModel {
  int window_width = 0;
  int window_height = 0;
  std::vector<Stage> stages;
  std::vector<HaarFeature> features;
};

namespace detail {

using boost::property_tree::ptree;

inline std::vector<double> parse_numbers(const std::string& text, std::string_view what) {
  std::vector<double> out;
  const char* p = text.data();
  const char* end = p + text.size();
  while (p < end) {
    while (p < end && std::isspace(static_cast<unsigned char>(*p))) ++p;
    if (p == end) break;
    double v = 0.0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next < end && !std::isspace(static_cast<unsigned char>(*next)))) {
      throw DataError("cascade: non-numeric value in " + std::string(what));
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

inline int as_int(double v, std::string_view what) {
  if (v != std::floor(v) || std::abs(v) > 1e9) throw DataError("cascade: " + std::string(what) + " must be an integer");
  return static_cast<int>(v);
}

inline const ptree& child(const ptree& t, const char* path) {
  auto c = t.get_child_optional(path);
  if (!c) throw DataError(std::string("cascade: missing element <") + path + ">");
  return *c;
}

inline double scalar(const ptree& t, const char* path) {
  auto nums = parse_numbers(child(t, path).data(), path);
  if (nums.size() != 1) throw DataError(std::string("cascade: <") + path + "> must hold one number");
  return nums[0];
}

}  // namespace detail

/// Parses the BOOST/HAAR cascade XML layout (opencv_storage > cascade with
/// stages/weakClassifiers/features). Throws DataError; never returns a
/// partially filled model.
inline CascadeModel parse_cascade(const std::string& xml_text) {
  namespace pt = boost::property_tree;
  pt::ptree doc;
  try {
    std::istringstream in(xml_text);
    pt::read_xml(in, doc, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw DataError(std::string("cascade: malformed XML: ") + e.what());
  }

  const auto& root = detail::child(doc, "opencv_storage.cascade");
  if (auto st = root.get_optional<std::string>("stageType"); st && *st != "BOOST") {
    throw DataError("cascade: unsupported stageType " + *st);
  }
  if (auto ft = root.get_optional<std::string>("featureType"); ft && *ft != "HAAR") {
    throw DataError("cascade: unsupported featureType " + *ft);
  }

  CascadeModel model;
  model.window_width = detail::as_int(detail::scalar(root, "width"), "width");
  model.window_height = detail::as_int(detail::scalar(root, "height"), "height");
  if (model.window_width < 1 || model.window_height < 1) throw DataError("cascade: empty base window");
  const int declared_stages = detail::as_int(detail::scalar(root, "stageNum"), "stageNum");

  for (const auto& [fname, fnode] : detail::child(root, "features")) {
    if (fname != "_") continue;
    if (fnode.get_optional<std::string>("tilted") && detail::scalar(fnode, "tilted") != 0.0) {
      throw DataError("cascade: tilted features are not supported");
    }
    HaarFeature feature;
    double weighted_area = 0.0;
    double magnitude = 0.0;
    for (const auto& [rname, rnode] : detail::child(fnode, "rects")) {
      if (rname != "_") continue;
      const auto v = detail::parse_numbers(rnode.data(), "rects");
      if (v.size() != 5) throw DataError("cascade: rectangle needs x y w h weight");
      HaarRect r{detail::as_int(v[0], "rect x"), detail::as_int(v[1], "rect y"), detail::as_int(v[2], "rect w"),
                 detail::as_int(v[3], "rect h"), v[4]};
      if (r.x < 0 || r.y < 0 || r.w < 0 || r.h < 0 || r.x + r.w > model.window_width ||
          r.y + r.h > model.window_height) {
        throw DataError("cascade: rectangle outside base window");
      }
      weighted_area += r.weight * r.w * r.h;
      magnitude += std::abs(r.weight * r.w * r.h);
      feature.rects.push_back(r);
    }
    if (feature.rects.empty() || feature.rects.size() > 3) throw DataError("cascade: feature needs 1-3 rectangles");
    if (std::abs(weighted_area) > 1e-6 * magnitude) {
      throw DataError("cascade: feature weights are not area-compensated");
    }
    model.features.push_back(std::move(feature));
  }

  for (const auto& [sname, snode] : detail::child(root, "stages")) {
    if (sname != "_") continue;
    Stage stage;
    stage.threshold = detail::scalar(snode, "stageThreshold");
    const int declared_weak = detail::as_int(detail::scalar(snode, "maxWeakCount"), "maxWeakCount");
    for (const auto& [wname, wnode] : detail::child(snode, "weakClassifiers")) {
      if (wname != "_") continue;
      WeakClassifier wc;
      const auto nodes = detail::parse_numbers(detail::child(wnode, "internalNodes").data(), "internalNodes");
      wc.leaves = detail::parse_numbers(detail::child(wnode, "leafValues").data(), "leafValues");
      if (nodes.empty() || nodes.size() % 4 != 0) throw DataError("cascade: internalNodes must come in fours");
      for (std::size_t i = 0; i < nodes.size(); i += 4) {
        TreeNode n{detail::as_int(nodes[i], "left"), detail::as_int(nodes[i + 1], "right"),
                   detail::as_int(nodes[i + 2], "feature index"), nodes[i + 3]};
        if (n.feature < 0 || n.feature >= static_cast<int>(model.features.size())) {
          throw DataError("cascade: feature index out of range");
        }
        wc.nodes.push_back(n);
      }
      const int n_nodes = static_cast<int>(wc.nodes.size());
      const int n_leaves = static_cast<int>(wc.leaves.size());
      for (int i = 0; i < n_nodes; ++i) {
        for (int c : {wc.nodes[i].left, wc.nodes[i].right}) {
          // Children always point forward, so evaluation terminates.
          if ((c > 0 && (c >= n_nodes || c <= i)) || (c <= 0 && -c >= n_leaves)) {
            throw DataError("cascade: tree child index out of range");
          }
        }
      }
      stage.classifiers.push_back(std::move(wc));
    }
    if (static_cast<int>(stage.classifiers.size()) != declared_weak) {
      throw DataError("cascade: stage declares " + std::to_string(declared_weak) + " classifiers, has " +
                      std::to_string(stage.classifiers.size()));
    }
    model.stages.push_back(std::move(stage));
  }
  if (model.stages.empty()) throw DataError("cascade: no stages");
  if (static_cast<int>(model.stages.size()) != declared_stages) {
    throw DataError("cascade: declares " + std::to_string(declared_stages) + " stages, has " +
                    std::to_string(model.stages.size()));
  }
  return model;
}

/// Runs every stage on the base-size window at (x, y) of `ii`. Feature
/// responses are divided by the window's standard-deviation factor
/// sqrt(area * sum(I^2) - sum(I)^2) over the window inset by one pixel.
inline bool window_passes(const CascadeModel& model, const IntegralImage& ii, int x, int y) {
  const int nw = model.window_width - 2;
  const int nh = model.window_height - 2;
  const std::int64_t area = static_cast<std::int64_t>(nw) * nh;
  const std::int64_t s = ii.rect_sum(x + 1, y + 1, nw, nh);
  const std::int64_t sq = ii.rect_sq_sum(x + 1, y + 1, nw, nh);
  const std::int64_t spread = area * sq - s * s;
  const double inv_norm = spread > 0 ? 1.0 / std::sqrt(static_cast<double>(spread)) : 1.0;

  for (const Stage& stage : model.stages) {
    double total = 0.0;
    for (const WeakClassifier& wc : stage.classifiers) {
      int idx = 0;
      for (;;) {
        const TreeNode& node = wc.nodes[idx];
        double value = 0.0;
        for (const HaarRect& r : model.features[node.feature].rects) {
          value += r.weight * static_cast<double>(ii.rect_sum(x + r.x, y + r.y, r.w, r.h));
        }
        const int next = value * inv_norm < node.threshold ? node.left : node.right;
        if (next <= 0) {
          total += wc.leaves[-next];
          break;
        }
        idx = next;
      }
    }
    if (total < stage.threshold) return false;
  }
  return true;
}

}  // namespace emo::vision
