#pragma once

#include <cmath>
#include <vector>

#include "emo/dsp/spectrum.hpp"

namespace emo::dsp {

struct PitchOptions {
  double min_hz = 50.0;
  double max_hz = 500.0;
  /// Frames whose best normalized autocorrelation is below this are unvoiced.
  double voicing_threshold = 0.3;
  /// Octave guard: the earliest local peak within this fraction of the best wins.
  double peak_ratio = 0.9;
  std::size_t frame_length = kFrameLength;
  std::size_t hop_length = kHopLength;
};

/// F0 of one raw frame by normalized autocorrelation of the mean-removed
/// frame; 0 when unvoiced.
inline double frame_pitch(std::span<const double> raw, std::uint32_t rate, const PitchOptions& opt = {}) {
  const std::size_t n = raw.size();
  if (n == 0) return 0.0;
  double mean = 0.0;
  for (double x : raw) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> frame(raw.begin(), raw.end());
  for (double& x : frame) x -= mean;

  const auto min_lag = static_cast<std::size_t>(std::ceil(rate / opt.max_hz));
  const auto max_lag = std::min(static_cast<std::size_t>(std::floor(rate / opt.min_hz)), n - 1);
  if (min_lag < 1 || min_lag > max_lag) return 0.0;

  // energy[i] = sum of squares of frame[0, i)
  std::vector<double> energy(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) energy[i + 1] = energy[i] + frame[i] * frame[i];

  std::vector<double> r(max_lag + 2, 0.0);
  double best = 0.0;
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
    double cross = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) cross += frame[i] * frame[i + lag];
    const double e0 = energy[n - lag];
    const double e1 = energy[n] - energy[lag];
    const double prod = e0 * e1;
    r[lag] = prod > 0.0 ? cross / std::sqrt(prod) : 0.0;
    best = std::max(best, r[lag]);
  }
  if (best < opt.voicing_threshold) return 0.0;

  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
    const bool left_ok = lag == min_lag || r[lag] >= r[lag - 1];
    const bool right_ok = lag == max_lag || r[lag] >= r[lag + 1];
    if (left_ok && right_ok && r[lag] >= opt.peak_ratio * best) {
      return static_cast<double>(rate) / static_cast<double>(lag);
    }
  }
  return 0.0;
}

/// Per-frame F0 over the clip (unwindowed frames), 0 = unvoiced.
inline std::vector<double> pitch(const io::AudioClip& clip, const PitchOptions& opt = {}) {
  const Matrix frames = frame_signal(clip.samples, opt.frame_length, opt.hop_length);
  std::vector<double> f0(frames.rows);
  for (std::size_t t = 0; t < frames.rows; ++t) f0[t] = frame_pitch(frames.row(t), clip.sample_rate, opt);
  return f0;
}

}  // namespace emo::dsp
