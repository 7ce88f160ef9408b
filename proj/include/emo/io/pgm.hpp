#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "emo/io/bytes.hpp"

namespace emo::io {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

namespace detail {

// Skips whitespace and '#' comments, then reads one unsigned decimal token.
inline long read_pnm_int(ByteView bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  long value = 0;
  std::size_t start = pos;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1'000'000) throw DataError("pgm: header value too large");
    ++pos;
  }
  if (pos == start) throw DataError("pgm: expected integer in header");
  return value;
}

}  // namespace detail

/// Binary netpbm "P5", maxval 255.
inline GrayImage decode_pgm(ByteView bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw DataError("pgm: bad magic");
  std::size_t pos = 2;
  const long w = detail::read_pnm_int(bytes, pos);
  const long h = detail::read_pnm_int(bytes, pos);
  const long maxval = detail::read_pnm_int(bytes, pos);
  if (maxval != 255) throw DataError("pgm: maxval " + std::to_string(maxval) + " unsupported");
  if (w < 1 || h < 1) throw DataError("pgm: empty image");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError("pgm: truncated header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos < n) throw DataError("pgm: truncated payload");
  GrayImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline Bytes encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

}  // namespace emo::io
