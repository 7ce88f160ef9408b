#pragma once

#include <cstdint>
#include <regex>
#include <string>
#include <string_view>

#include <boost/beast/core/detail/base64.hpp>
#include <json.hpp>

#include "emo/error.hpp"
#include "emo/io/bytes.hpp"

namespace emo::service {

/// One device instruction, sent as a single LF-terminated JSON line.
struct WireCommand {
  std::string device_id;
  std::string rgb;  // "#RRGGBB", upper-case hex
  int transition_ms = 0;
  std::int64_t seq = 0;

  friend bool operator==(const WireCommand&, const WireCommand&) = default;
};

inline bool valid_rgb(std::string_view rgb) {
  static const std::regex pattern("^#[0-9A-F]{6}$");
  return std::regex_match(rgb.begin(), rgb.end(), pattern);
}

inline std::string to_line(const WireCommand& c) {
  const nlohmann::json j = {
      {"device_id", c.device_id}, {"rgb", c.rgb}, {"transition_ms", c.transition_ms}, {"seq", c.seq}};
  return j.dump() + "\n";
}

inline WireCommand parse_wire_command(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("wire: not a JSON object");
  WireCommand c;
  try {
    c.device_id = j.at("device_id").get<std::string>();
    c.rgb = j.at("rgb").get<std::string>();
    if (!j.at("transition_ms").is_number_integer() || !j.at("seq").is_number_integer()) {
      throw DataError("wire: transition_ms and seq must be integers");
    }
    c.transition_ms = j.at("transition_ms").get<int>();
    c.seq = j.at("seq").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("wire: ") + e.what());
  }
  if (!valid_rgb(c.rgb)) throw DataError("wire: bad rgb " + c.rgb);
  return c;
}

inline std::string base64_encode(io::ByteView bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline io::Bytes base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  io::Bytes out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  // Decoding stops at the padding, which may only close the text.
  const std::size_t body = text.find_last_not_of('=') + 1;
  if (read != text.size() && (read != body || text.size() - body > 2)) throw DataError("base64: invalid character");
  out.resize(written);
  return out;
}

}  // namespace emo::service
