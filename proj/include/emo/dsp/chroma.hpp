#pragma once

#include <array>
#include <cmath>
#include <string_view>

#include "emo/dsp/spectrum.hpp"

namespace emo::dsp {

inline constexpr double kChromaMinHz = 55.0;
inline constexpr double kChromaMaxHz = 8000.0;
/// Bin magnitudes below this are rounding residue and count as silence.
inline constexpr double kChromaMagnitudeFloor = 1e-9;

inline constexpr std::array<std::string_view, 12> kPitchClassNames = {"C",  "C#", "D",  "D#", "E",  "F",
                                                                      "F#", "G",  "G#", "A",  "A#", "B"};
inline constexpr std::size_t kPitchClassA = 9;

/// Pitch class of a frequency, 0 = C. Nearest equal-tempered semitone relative to A440.
inline std::size_t pitch_class(double hz) {
  const long semis = std::lround(12.0 * std::log2(hz / 440.0));
  const long from_a = ((semis % 12) + 12) % 12;
  return static_cast<std::size_t>((from_a + static_cast<long>(kPitchClassA)) % 12);
}

/// frames x 12. Bins in [55 Hz, 8 kHz] with magnitude at or above the floor
/// add their magnitude to their pitch class; rows with non-zero mass are
/// L1-normalized.
inline Matrix chroma(const Spectrogram& spec) {
  Matrix out(spec.magnitude.rows, 12);
  std::vector<std::pair<std::size_t, std::size_t>> bin_class;
  for (std::size_t k = 1; k < spec.bins(); ++k) {
    const double f = spec.bin_frequency(k);
    if (f >= kChromaMinHz && f <= kChromaMaxHz) bin_class.emplace_back(k, pitch_class(f));
  }
  for (std::size_t t = 0; t < out.rows; ++t) {
    const auto mag = spec.magnitude.row(t);
    auto row = out.row(t);
    for (auto [k, c] : bin_class) {
      if (mag[k] >= kChromaMagnitudeFloor) row[c] += mag[k];
    }
    double total = 0.0;
    for (double v : row) total += v;
    if (total > 0.0) {
      for (double& v : row) v /= total;
    }
  }
  return out;
}

}  // namespace emo::dsp
