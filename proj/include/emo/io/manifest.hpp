#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "emo/io/bytes.hpp"

namespace emo::io {

enum class Split { train, val, test };

inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

inline std::string_view to_string(Split s) { return kSplitNames[static_cast<int>(s)]; }

inline Split parse_split(std::string_view token) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (token == kSplitNames[i]) return static_cast<Split>(i);
  }
  throw DataError("manifest: unknown split '" + std::string(token) + "'");
}

struct ManifestRecord {
  std::string path;
  int label_id = 0;
  Split split = Split::train;
};

struct Manifest {
  std::vector<std::string> labels;
  std::vector<ManifestRecord> records;
  /// Directory relative record paths are resolved against.
  std::filesystem::path base_dir;

  std::vector<ManifestRecord> in_split(Split s) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records) {
      if (r.split == s) out.push_back(r);
    }
    return out;
  }

  std::size_t count(Split s) const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.split == s;
    return n;
  }

  std::filesystem::path resolve(const ManifestRecord& r) const {
    std::filesystem::path p(r.path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

/// First line: comma-separated label names. Then `split<TAB>label_id<TAB>path` per line.
inline Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::map<std::string, Split, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_done = false;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!header_done) {
      header_done = true;
      std::size_t start = 0;
      while (start <= line.size()) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) comma = line.size();
        std::string_view name = line.substr(start, comma - start);
        if (name.empty()) throw DataError("manifest: empty label name in header");
        m.labels.emplace_back(name);
        start = comma + 1;
      }
      continue;
    }
    if (line.empty()) continue;

    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw DataError("manifest: line " + std::to_string(line_no) + " needs 3 tab-separated fields");
    }
    ManifestRecord r;
    r.split = parse_split(line.substr(0, t1));
    std::string_view id = line.substr(t1 + 1, t2 - t1 - 1);
    auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), r.label_id);
    if (ec != std::errc() || ptr != id.data() + id.size()) {
      throw DataError("manifest: line " + std::to_string(line_no) + " has non-numeric label id");
    }
    if (r.label_id < 0 || r.label_id >= static_cast<int>(m.labels.size())) {
      throw DataError("manifest: line " + std::to_string(line_no) + " label id out of range");
    }
    r.path = std::string(line.substr(t2 + 1));
    if (r.path.empty()) throw DataError("manifest: line " + std::to_string(line_no) + " has empty path");
    auto [it, inserted] = seen.try_emplace(r.path, r.split);
    if (!inserted && it->second != r.split) {
      throw DataError("manifest: " + r.path + " appears in more than one split");
    }
    m.records.push_back(std::move(r));
  }
  if (m.labels.empty()) throw DataError("manifest: missing label header");
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  const Bytes bytes = read_file(path);
  Manifest m = parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  m.base_dir = path.parent_path();
  return m;
}

inline std::string format_manifest(const Manifest& m) {
  std::ostringstream os;
  for (std::size_t i = 0; i < m.labels.size(); ++i) os << (i ? "," : "") << m.labels[i];
  os << '\n';
  for (const auto& r : m.records) os << to_string(r.split) << '\t' << r.label_id << '\t' << r.path << '\n';
  return os.str();
}

}  // namespace emo::io
