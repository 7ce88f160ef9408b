#pragma once

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "emo/affect/decision.hpp"
#include "emo/error.hpp"

namespace emo::affect {

struct Track {
  std::string track_id;
  std::string title;
  double valence = 0.0;
  double arousal = 0.0;
  double tempo_bpm = 0.0;
  std::string mode = "major";  // "major" | "minor"

  friend bool operator==(const Track&, const Track&) = default;
};

inline nlohmann::json to_json(const Track& t) {
  return {{"track_id", t.track_id}, {"title", t.title},         {"valence", t.valence},
          {"arousal", t.arousal},   {"tempo_bpm", t.tempo_bpm}, {"mode", t.mode}};
}

/// One JSON object per line; blank lines are skipped. Coordinates are
/// clamped to [-1, 1]; track ids must be unique.
inline std::vector<Track> parse_catalog(std::string_view text) {
  std::vector<Track> tracks;
  std::set<std::string> ids;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError("catalog line " + std::to_string(line_no) + ": not a JSON object");
    Track t;
    try {
      t.track_id = j.at("track_id").get<std::string>();
      t.title = j.value("title", std::string());
      const AffectPoint p = clamped({j.at("valence").get<double>(), j.at("arousal").get<double>()});
      t.valence = p.valence;
      t.arousal = p.arousal;
      t.tempo_bpm = j.value("tempo_bpm", 0.0);
      t.mode = j.value("mode", std::string("major"));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("catalog line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!std::isfinite(t.valence) || !std::isfinite(t.arousal)) {
      throw DataError("catalog line " + std::to_string(line_no) + ": non-finite coordinates");
    }
    if (t.mode != "major" && t.mode != "minor") {
      throw DataError("catalog line " + std::to_string(line_no) + ": mode must be major or minor");
    }
    if (!ids.insert(t.track_id).second) throw DataError("catalog: duplicate track_id " + t.track_id);
    tracks.push_back(std::move(t));
  }
  return tracks;
}

enum class MusicPhase { discharge, diversion };

inline std::string_view to_string(MusicPhase p) { return p == MusicPhase::discharge ? "discharge" : "diversion"; }

struct PlannedTrack {
  Track track;
  MusicPhase phase = MusicPhase::diversion;
  AffectPoint target;
};

inline constexpr AffectPoint kDiversionTarget{0.8, 0.3};
inline constexpr int kDefaultPlaylistLength = 5;

/// Walks a straight line from `current` to the pleasant target in `n`
/// evenly spaced steps (the first step sits on `current`, the last on the
/// target). Each step takes the unused track nearest in L1 distance, ties
/// going to the smaller track_id. The first pick is the discharge track.
inline std::vector<PlannedTrack> plan_music(AffectPoint current, const std::vector<Track>& catalog,
                                            int n = kDefaultPlaylistLength, AffectPoint target = kDiversionTarget) {
  if (catalog.empty()) throw DataError("plan_music: empty catalog");
  if (n < 1) throw std::invalid_argument("plan_music: n must be >= 1");
  current = clamped(current);
  std::vector<bool> used(catalog.size(), false);
  std::vector<PlannedTrack> plan;
  for (int k = 0; k < n && plan.size() < catalog.size(); ++k) {
    const double f = n == 1 ? 0.0 : static_cast<double>(k) / (n - 1);
    const AffectPoint goal{current.valence + f * (target.valence - current.valence),
                           current.arousal + f * (target.arousal - current.arousal)};
    std::size_t best = catalog.size();
    double best_d = 0.0;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      if (used[i]) continue;
      const double d = std::abs(catalog[i].valence - goal.valence) + std::abs(catalog[i].arousal - goal.arousal);
      if (best == catalog.size() || d < best_d || (d == best_d && catalog[i].track_id < catalog[best].track_id)) {
        best = i;
        best_d = d;
      }
    }
    used[best] = true;
    plan.push_back({catalog[best], k == 0 ? MusicPhase::discharge : MusicPhase::diversion, goal});
  }
  return plan;
}

}  // namespace emo::affect
