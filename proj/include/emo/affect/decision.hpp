#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emo::affect {

/// The four-class decision space, in tie-break order.
enum class Mood { angry = 0, happy = 1, neutral = 2, sad = 3 };

inline constexpr std::array<Mood, 4> kMoods = {Mood::angry, Mood::happy, Mood::neutral, Mood::sad};
inline constexpr std::size_t kMoodCount = kMoods.size();
using MoodDistribution = std::array<double, kMoodCount>;

inline std::string_view to_string(Mood m) {
  static constexpr std::array<std::string_view, 4> names = {"angry", "happy", "neutral", "sad"};
  return names[static_cast<int>(m)];
}

inline std::optional<Mood> parse_mood(std::string_view s) {
  for (Mood m : kMoods) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

struct AffectPoint {
  double valence = 0.0;
  double arousal = 0.0;

  friend bool operator==(const AffectPoint&, const AffectPoint&) = default;
};

inline AffectPoint clamped(AffectPoint p) {
  return {std::clamp(p.valence, -1.0, 1.0), std::clamp(p.arousal, -1.0, 1.0)};
}

/// Circumplex placement of every emotion name the classifiers emit.
struct AffectTable {
  struct Entry {
    std::string_view label;
    AffectPoint point;
  };
  std::array<Entry, 8> entries = {{
      {"angry", {-0.6, 0.7}},
      {"happy", {0.8, 0.5}},
      {"sad", {-0.7, -0.5}},
      {"neutral", {0.0, 0.0}},
      {"calm", {0.3, -0.4}},
      {"fearful", {-0.6, 0.6}},
      {"disgust", {-0.7, 0.3}},
      {"surprised", {0.4, 0.8}},
  }};
};

/// Accepts the eight emotion names and the gendered SER class names.
inline AffectPoint label_to_affect(std::string_view label, const AffectTable& table = {}) {
  if (const auto us = label.find('_'); us != std::string_view::npos) label = label.substr(us + 1);
  for (const auto& e : table.entries) {
    if (e.label == label) return clamped(e.point);
  }
  throw std::invalid_argument("unknown emotion label '" + std::string(label) + "'");
}

inline AffectPoint mood_to_affect(Mood m, const AffectTable& table = {}) { return label_to_affect(to_string(m), table); }

inline constexpr double kSimplexTolerance = 1e-6;
inline constexpr double kDefaultFaceWeight = 0.6;

inline void check_simplex(const std::vector<double>& p, std::size_t n, std::string_view what) {
  if (p.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(n) + " probabilities");
  }
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": negative or non-finite");
    total += v;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) throw std::invalid_argument(std::string(what) + ": does not sum to 1");
}

/// Collapses the 16 SER classes (gender * 8 + emotion) to the four moods:
/// neutral, calm -> neutral; happy, surprised -> happy; sad, fearful -> sad;
/// angry, disgust -> angry.
inline MoodDistribution map_ser(const std::vector<double>& ser) {
  check_simplex(ser, 16, "ser posterior");
  static constexpr std::array<Mood, 8> target = {Mood::neutral, Mood::neutral, Mood::happy, Mood::sad,
                                                 Mood::angry,   Mood::sad,     Mood::angry, Mood::happy};
  MoodDistribution out{};
  for (std::size_t i = 0; i < ser.size(); ++i) out[static_cast<int>(target[i % 8])] += ser[i];
  return out;
}

/// First maximum in angry < happy < neutral < sad order.
inline Mood argmax(const MoodDistribution& p) {
  return static_cast<Mood>(std::max_element(p.begin(), p.end()) - p.begin());
}

struct Fused {
  MoodDistribution posterior{};
  Mood label = Mood::neutral;
};

/// w * fer + (1 - w) * mapped ser, renormalized. A missing modality hands
/// its weight to the other.
inline Fused fuse(const std::optional<std::vector<double>>& fer, const std::optional<std::vector<double>>& ser,
                  double w_face = kDefaultFaceWeight) {
  if (!(w_face >= 0.0 && w_face <= 1.0)) throw std::invalid_argument("fuse: face weight outside [0, 1]");
  if (!fer && !ser) throw std::invalid_argument("fuse: no modality present");
  MoodDistribution face{}, voice{};
  if (fer) {
    check_simplex(*fer, kMoodCount, "fer posterior");
    std::copy(fer->begin(), fer->end(), face.begin());
  }
  if (ser) voice = map_ser(*ser);
  const double wf = !ser ? 1.0 : !fer ? 0.0 : w_face;
  Fused f;
  double total = 0.0;
  for (std::size_t i = 0; i < kMoodCount; ++i) {
    f.posterior[i] = wf * face[i] + (1.0 - wf) * voice[i];
    total += f.posterior[i];
  }
  for (double& v : f.posterior) v /= total;
  f.label = argmax(f.posterior);
  return f;
}

inline Fused fuse(const std::vector<double>& fer, const std::vector<double>& ser, double w_face = kDefaultFaceWeight) {
  return fuse(std::optional(fer), std::optional(ser), w_face);
}

struct ColorStep {
  std::string rgb;  // "#RRGGBB"
  int transition_ms = 0;

  friend bool operator==(const ColorStep&, const ColorStep&) = default;
};

inline constexpr int kDefaultTransitionMs = 4000;

/// Color trajectory per mood: angry calms from purple to soft blue, sad
/// brightens from orange to red, happy moves blue to yellow, neutral gets a
/// single soft yellow.
inline std::vector<ColorStep> plan_color(Mood m, int transition_ms = kDefaultTransitionMs) {
  switch (m) {
    case Mood::angry: return {{"#4B0082", transition_ms}, {"#87CEEB", transition_ms}};
    case Mood::sad: return {{"#FFA500", transition_ms}, {"#FF4500", transition_ms}};
    case Mood::happy: return {{"#4169E1", transition_ms}, {"#FFD700", transition_ms}};
    case Mood::neutral: break;
  }
  return {{"#FFFACD", transition_ms}};
}

}  // namespace emo::affect
