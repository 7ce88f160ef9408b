#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "emo/io/bytes.hpp"

namespace emo::io {

inline constexpr std::uint32_t kModelFileVersion = 1;
inline constexpr char kModelMagic[4] = {'E', 'M', 'O', 'W'};

/// One named parameter array.
struct Blob {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  friend bool operator==(const Blob&, const Blob&) = default;
};

/// Container layout:
///   "EMOW" | u32 version | u32 header length | header JSON | float32 blobs
/// All integers and floats little-endian. The header's "blobs" array lists
/// name and shape for each blob, in storage order; it is generated from
/// `blobs` on write and must not be set by callers.
struct ModelFile {
  std::uint32_t version = kModelFileVersion;
  nlohmann::json header = nlohmann::json::object();
  std::vector<Blob> blobs;
};

inline std::int64_t shape_size(const std::vector<std::int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

namespace detail {

// Width of the last layer that carries a "units" field, or -1.
inline std::int64_t final_units(const nlohmann::json& header) {
  if (!header.contains("layers") || !header["layers"].is_array()) return -1;
  const auto& layers = header["layers"];
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->contains("units")) return (*it)["units"].get<std::int64_t>();
  }
  return -1;
}

inline void check_label_width(const nlohmann::json& header) {
  if (!header.contains("labels")) return;
  const std::int64_t units = final_units(header);
  if (units < 0) return;
  const auto n = static_cast<std::int64_t>(header["labels"].size());
  if (n != units) {
    throw ModelError("model: shape mismatch: " + std::to_string(n) + " labels for final width " +
                     std::to_string(units));
  }
}

}  // namespace detail

inline Bytes write_model(const ModelFile& model) {
  nlohmann::json header = model.header;
  header.erase("blobs");
  detail::check_label_width(header);
  nlohmann::json descriptors = nlohmann::json::array();
  for (const Blob& b : model.blobs) {
    if (shape_size(b.shape) != static_cast<std::int64_t>(b.values.size())) {
      throw ModelError("model: shape mismatch in blob " + b.name);
    }
    descriptors.push_back({{"name", b.name}, {"shape", b.shape}});
  }
  header["blobs"] = std::move(descriptors);
  const std::string text = header.dump();

  Bytes out(kModelMagic, kModelMagic + 4);
  store_le32(out, model.version);
  store_le32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const Blob& b : model.blobs) {
    for (float v : b.values) store_lef32(out, v);
  }
  return out;
}

inline ModelFile read_model(ByteView bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    throw ModelError("model: bad magic");
  }
  ModelFile model;
  model.version = load_le32(bytes.data() + 4);
  if (model.version != kModelFileVersion) {
    throw ModelError("model: unsupported version " + std::to_string(model.version));
  }
  const std::uint32_t header_len = load_le32(bytes.data() + 8);
  if (bytes.size() - 12 < header_len) throw ModelError("model: truncated header");
  const auto* hp = reinterpret_cast<const char*>(bytes.data() + 12);
  nlohmann::json header = nlohmann::json::parse(hp, hp + header_len, nullptr, false);
  if (header.is_discarded() || !header.is_object()) throw ModelError("model: header is not a JSON object");
  if (!header.contains("blobs") || !header["blobs"].is_array()) throw ModelError("model: header lacks blob table");
  detail::check_label_width(header);

  std::size_t pos = 12 + header_len;
  for (const auto& d : header["blobs"]) {
    Blob b;
    try {
      b.name = d.at("name").get<std::string>();
      b.shape = d.at("shape").get<std::vector<std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("model: bad blob descriptor: ") + e.what());
    }
    for (auto s : b.shape) {
      if (s < 0 || s > (1 << 28)) throw ModelError("model: shape mismatch in blob " + b.name);
    }
    const auto count = static_cast<std::uint64_t>(shape_size(b.shape));
    if ((bytes.size() - pos) / 4 < count) throw ModelError("model: truncated blob " + b.name);
    b.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) b.values[i] = load_lef32(bytes.data() + pos + 4 * i);
    pos += 4 * count;
    model.blobs.push_back(std::move(b));
  }
  if (pos != bytes.size()) throw ModelError("model: trailing bytes after blobs");
  header.erase("blobs");
  model.header = std::move(header);
  return model;
}

}  // namespace emo::io
