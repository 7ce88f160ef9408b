#pragma once

#include <array>
#include <cmath>

#include "emo/dsp/chroma.hpp"
#include "emo/dsp/mel.hpp"
#include "emo/dsp/pitch.hpp"

namespace emo::dsp {

inline constexpr std::size_t kCoarseBands = 12;
inline constexpr std::size_t kFeatureLength = kMfccCount + 12 + kCoarseBands + 2;
static_assert(kFeatureLength == 66);

/// SER model input. Layout:
///   [0, 40)   mean MFCC
///   [40, 52)  mean chroma, C first
///   [52, 64)  mean log-mel over 12 contiguous groups of mel bands
///   [64]      mean F0 over voiced frames (Hz), 0 if none voiced
///   [65]      mean frame RMS
using FeatureVector = std::array<double, kFeatureLength>;

namespace detail {
inline double column_mean(const Matrix& m, std::size_t c) {
  double acc = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) acc += m(r, c);
  return m.rows ? acc / static_cast<double>(m.rows) : 0.0;
}
}  // namespace detail

inline FeatureVector extract_features(const io::AudioClip& clip) {
  const Spectrogram spec = stft(clip);
  const MelSpectrogram mel = mel_spectrogram(spec);
  const Matrix cepstra = mfcc(mel);
  const Matrix pitch_classes = chroma(spec);

  FeatureVector fv{};
  std::size_t at = 0;
  for (std::size_t c = 0; c < kMfccCount; ++c) fv[at++] = detail::column_mean(cepstra, c);
  for (std::size_t c = 0; c < 12; ++c) fv[at++] = detail::column_mean(pitch_classes, c);

  for (std::size_t band = 0; band < kCoarseBands; ++band) {
    const std::size_t lo = band * mel.n_mels / kCoarseBands;
    const std::size_t hi = (band + 1) * mel.n_mels / kCoarseBands;
    double acc = 0.0;
    for (std::size_t c = lo; c < hi; ++c) acc += detail::column_mean(mel.log_power, c);
    fv[at++] = acc / static_cast<double>(hi - lo);
  }

  const auto f0 = pitch(clip);
  double voiced_sum = 0.0;
  std::size_t voiced = 0;
  for (double f : f0) {
    if (f > 0.0) {
      voiced_sum += f;
      ++voiced;
    }
  }
  fv[at++] = voiced ? voiced_sum / static_cast<double>(voiced) : 0.0;

  const Matrix raw = frame_signal(clip.samples, kFrameLength, kHopLength);
  double rms_sum = 0.0;
  for (std::size_t t = 0; t < raw.rows; ++t) {
    double e = 0.0;
    for (double x : raw.row(t)) e += x * x;
    rms_sum += std::sqrt(e / static_cast<double>(raw.cols));
  }
  fv[at++] = rms_sum / static_cast<double>(raw.rows);
  return fv;
}

}  // namespace emo::dsp
