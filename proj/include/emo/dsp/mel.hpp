#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "emo/dsp/spectrum.hpp"

namespace emo::dsp {

inline constexpr std::size_t kMelBands = 128;
inline constexpr std::size_t kMfccCount = 40;
inline constexpr double kLogFloor = 1e-10;

/// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters at equally spaced mel centers, peak weight 1.
/// Rows are filters, columns FFT bins (n_fft/2 + 1).
inline Matrix mel_filterbank(std::size_t n_mels, double f_min, double f_max, std::size_t n_fft,
                             std::uint32_t rate) {
  if (n_mels == 0 || n_fft == 0 || rate == 0) throw std::invalid_argument("mel filterbank: empty configuration");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= rate / 2.0)) {
    throw std::invalid_argument("mel filterbank: need 0 <= f_min < f_max <= rate/2");
  }
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  const std::size_t bins = n_fft / 2 + 1;
  Matrix fb(n_mels, bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    double total = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(n_fft);
      const double w = std::max(0.0, std::min((f - lo) / (center - lo), (hi - f) / (hi - center)));
      fb(m, k) = w;
      total += w;
    }
    if (total <= 0.0) {
      throw std::invalid_argument("mel filterbank: filter " + std::to_string(m) +
                                  " covers no FFT bin; reduce n_mels or raise n_fft");
    }
  }
  return fb;
}

/// frames x n_mels natural-log power, floored at log(1e-10).
struct MelSpectrogram {
  Matrix log_power;
  std::size_t n_mels = 0;
  double f_min = 0.0;
  double f_max = 0.0;
};

inline MelSpectrogram mel_spectrogram(const Spectrogram& spec, std::size_t n_mels = kMelBands, double f_min = 0.0,
                                      double f_max = -1.0) {
  if (f_max < 0.0) f_max = spec.sample_rate / 2.0;
  const Matrix fb = mel_filterbank(n_mels, f_min, f_max, spec.frame_length, spec.sample_rate);
  MelSpectrogram mel;
  mel.n_mels = n_mels;
  mel.f_min = f_min;
  mel.f_max = f_max;
  mel.log_power = Matrix(spec.magnitude.rows, n_mels);
  std::vector<double> power(spec.bins());
  for (std::size_t t = 0; t < spec.magnitude.rows; ++t) {
    const auto mag = spec.magnitude.row(t);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = mag[k] * mag[k];
    for (std::size_t m = 0; m < n_mels; ++m) {
      const auto w = fb.row(m);
      double acc = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) acc += w[k] * power[k];
      mel.log_power(t, m) = std::log(std::max(acc, kLogFloor));
    }
  }
  return mel;
}

/// Orthonormal DCT-II basis; row k is coefficient k.
inline Matrix dct_matrix(std::size_t n) {
  Matrix d(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      d(k, i) = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * i + 1.0) / (2.0 * n));
    }
  }
  return d;
}

inline Matrix mfcc(const MelSpectrogram& mel, std::size_t n_coeffs = kMfccCount) {
  const std::size_t n_mels = mel.log_power.cols;
  if (n_coeffs > n_mels) {
    throw std::invalid_argument("mfcc: " + std::to_string(n_coeffs) + " coefficients from " +
                                std::to_string(n_mels) + " mel bands");
  }
  const Matrix d = dct_matrix(n_mels);
  Matrix out(mel.log_power.rows, n_coeffs);
  for (std::size_t t = 0; t < out.rows; ++t) {
    const auto x = mel.log_power.row(t);
    for (std::size_t k = 0; k < n_coeffs; ++k) {
      const auto basis = d.row(k);
      double acc = 0.0;
      for (std::size_t i = 0; i < n_mels; ++i) acc += basis[i] * x[i];
      out(t, k) = acc;
    }
  }
  return out;
}

}  // namespace emo::dsp
