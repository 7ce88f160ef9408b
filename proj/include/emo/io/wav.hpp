#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "emo/io/bytes.hpp"

namespace emo::io {

/// Decoded PCM audio, merged to mono, samples in [-1, 1].
struct AudioClip {
  std::uint32_t sample_rate = 0;
  std::vector<double> samples;
  bool channels_merged = false;
};

enum class WavErrc {
  malformed_riff,
  unsupported_codec,
  unsupported_bit_depth,
  unsupported_channels,
  truncated,
  empty,
};

class WavError : public DataError {
 public:
  WavError(WavErrc code, const std::string& what) : DataError("wav: " + what), code_(code) {}
  WavErrc code() const noexcept { return code_; }

 private:
  WavErrc code_;
};

namespace detail {
constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xfffe;
}  // namespace detail

/// RIFF/WAVE, PCM 16-bit, one or two channels. Stereo frames are averaged.
inline AudioClip decode_wav(ByteView bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError(WavErrc::malformed_riff, "missing RIFF/WAVE header");
  }

  bool have_fmt = false;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = load_le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;

    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) throw WavError(WavErrc::malformed_riff, "bad fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      std::uint16_t tag = load_le16(f);
      channels = load_le16(f + 2);
      rate = load_le32(f + 4);
      bits = load_le16(f + 14);
      if (tag == detail::kFormatExtensible) {
        // The sub-format GUID starts with the real format tag.
        if (size < 40) throw WavError(WavErrc::malformed_riff, "short extensible fmt chunk");
        tag = load_le16(f + 24);
      }
      if (tag != detail::kFormatPcm) {
        throw WavError(WavErrc::unsupported_codec, "format tag " + std::to_string(tag) + " is not PCM");
      }
      if (bits != 16) {
        throw WavError(WavErrc::unsupported_bit_depth, std::to_string(bits) + "-bit samples");
      }
      if (channels < 1 || channels > 2) {
        throw WavError(WavErrc::unsupported_channels, std::to_string(channels) + " channels");
      }
      if (rate == 0) throw WavError(WavErrc::malformed_riff, "zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw WavError(WavErrc::malformed_riff, "data chunk before fmt chunk");
      if (size > avail) throw WavError(WavErrc::truncated, "data chunk exceeds file");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    if (size > avail) throw WavError(WavErrc::malformed_riff, "chunk exceeds file");
    pos = body + size + (size & 1u);
  }

  if (!have_fmt) throw WavError(WavErrc::malformed_riff, "no fmt chunk");
  if (data == nullptr) throw WavError(WavErrc::malformed_riff, "no data chunk");

  const std::size_t frame_bytes = 2u * channels;
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw WavError(WavErrc::empty, "no sample frames");

  AudioClip clip;
  clip.sample_rate = rate;
  clip.channels_merged = channels == 2;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* p = data + i * frame_bytes;
    double acc = 0.0;
    for (std::uint16_t c = 0; c < channels; ++c) {
      acc += static_cast<std::int16_t>(load_le16(p + 2 * c)) / 32768.0;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

/// Writes 16-bit PCM. Samples are clamped to [-1, 1) and rounded to the nearest step.
inline Bytes encode_wav(const std::vector<double>& samples, std::uint32_t sample_rate,
                        std::uint16_t channels = 1) {
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  Bytes out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  store_le32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  store_le32(out, 16);
  store_le16(out, detail::kFormatPcm);
  store_le16(out, channels);
  store_le32(out, sample_rate);
  store_le32(out, sample_rate * channels * 2);
  store_le16(out, static_cast<std::uint16_t>(channels * 2));
  store_le16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  store_le32(out, data_size);
  for (double s : samples) {
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    store_le16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0))));
  }
  return out;
}

}  // namespace emo::io
