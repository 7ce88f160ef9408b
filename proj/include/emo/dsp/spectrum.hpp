#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "emo/dsp/fft.hpp"
#include "emo/error.hpp"
#include "emo/io/wav.hpp"

namespace emo::dsp {

inline constexpr std::size_t kFrameLength = 2048;
inline constexpr std::size_t kHopLength = 512;

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Periodic Hann window, w[n] = 0.5 - 0.5 cos(2 pi n / N).
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

inline std::size_t frame_count(std::size_t n_samples, std::size_t frame_length, std::size_t hop_length) {
  if (frame_length == 0 || hop_length == 0) throw std::invalid_argument("frame and hop must be positive");
  if (n_samples < frame_length) {
    throw DataError("clip of " + std::to_string(n_samples) + " samples is shorter than one frame (" +
                    std::to_string(frame_length) + ")");
  }
  return 1 + (n_samples - frame_length) / hop_length;
}

/// Unwindowed frames; only full frames are produced.
inline Matrix frame_signal(std::span<const double> samples, std::size_t frame_length, std::size_t hop_length) {
  const std::size_t n = frame_count(samples.size(), frame_length, hop_length);
  Matrix frames(n, frame_length);
  for (std::size_t t = 0; t < n; ++t) {
    const double* src = samples.data() + t * hop_length;
    std::copy(src, src + frame_length, frames.row(t).begin());
  }
  return frames;
}

inline Matrix frame_and_window(const io::AudioClip& clip, std::size_t frame_length = kFrameLength,
                               std::size_t hop_length = kHopLength) {
  Matrix frames = frame_signal(clip.samples, frame_length, hop_length);
  const auto w = hann_window(frame_length);
  for (std::size_t t = 0; t < frames.rows; ++t) {
    auto r = frames.row(t);
    for (std::size_t i = 0; i < frame_length; ++i) r[i] *= w[i];
  }
  return frames;
}

/// Magnitude spectrogram, frames x (frame_length/2 + 1).
struct Spectrogram {
  Matrix magnitude;
  std::size_t frame_length = 0;
  std::size_t hop_length = 0;
  std::uint32_t sample_rate = 0;

  std::size_t bins() const { return magnitude.cols; }
  double bin_frequency(std::size_t k) const {
    return static_cast<double>(k) * sample_rate / static_cast<double>(frame_length);
  }
};

inline Spectrogram stft(const io::AudioClip& clip, std::size_t frame_length = kFrameLength,
                        std::size_t hop_length = kHopLength) {
  const Matrix frames = frame_and_window(clip, frame_length, hop_length);
  Spectrogram spec;
  spec.frame_length = frame_length;
  spec.hop_length = hop_length;
  spec.sample_rate = clip.sample_rate;
  const std::size_t bins = frame_length / 2 + 1;
  spec.magnitude = Matrix(frames.rows, bins);
  for (std::size_t t = 0; t < frames.rows; ++t) {
    const auto x = dft(frames.row(t));
    for (std::size_t k = 0; k < bins; ++k) spec.magnitude(t, k) = std::abs(x[k]);
  }
  return spec;
}

}  // namespace emo::dsp
