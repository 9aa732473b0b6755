#pragma once

// File formats: density sequences (.cdmf), annotation CSV, and small
// little-endian helpers shared with the checkpoint format.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crowdcast/density.hpp"

namespace crowdcast::io {

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

/// Bounds-checked little-endian reader over an in-memory file.
class Reader {
 public:
  Reader(std::string bytes, std::string what) : bytes_(std::move(bytes)), what_(std::move(what)) {}

  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    if (std::string_view(bytes_).substr(pos_, magic.size()) != magic)
      throw FormatError(what_ + ": bad magic bytes (expected " + std::string(magic) + ")");
    pos_ += magic.size();
  }

  std::uint8_t u8(const char* field) {
    need(1, field);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16(const char* field) {
    need(2, field);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_++]) << (8 * i));
    return v;
  }
  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
  std::string text(std::size_t n, const char* field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  const std::string& what() const noexcept { return what_; }

  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(what_ + ": truncated while reading " + field);
  }

 private:
  std::string bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

inline constexpr std::uint32_t kSequenceVersion = 1;

/// CDMF: magic, u32 version, W, H, T, frame rate in millihertz, then
/// T*H*W little-endian f32 (frame-major, then row-major).
inline std::string encode_sequence(const DensitySequence& seq) {
  validate(seq);
  std::string out = "CDMF";
  detail::put_u32(out, kSequenceVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(seq.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.height()));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.length()));
  detail::put_u32(out, static_cast<std::uint32_t>(std::llround(seq.frame_rate * 1000.0)));
  for (const auto& f : seq.frames)
    for (float v : f.values) detail::put_f32(out, v);
  return out;
}

inline DensitySequence decode_sequence(std::string bytes, const std::string& what = "cdmf") {
  detail::Reader r(std::move(bytes), what);
  r.expect_magic("CDMF");
  const std::uint32_t version = r.u32("version");
  if (version != kSequenceVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  const std::uint64_t w = r.u32("width"), h = r.u32("height"), t = r.u32("frame count");
  const std::uint32_t mhz = r.u32("frame rate");
  if (w == 0 || h == 0 || t == 0) throw FormatError(what + ": zero extent in header");
  // 32-bit extents cannot overflow 64-bit products until the final *4.
  const std::uint64_t cells = w * h;
  if (cells > std::numeric_limits<std::uint64_t>::max() / 4 / t)
    throw FormatError(what + ": extent overflow");
  if (cells * t * 4 > r.remaining()) throw FormatError(what + ": truncated payload");
  if (cells * t * 4 != r.remaining()) throw FormatError(what + ": trailing bytes after payload");
  DensitySequence seq;
  seq.frame_rate = static_cast<double>(mhz) / 1000.0;
  seq.frames.reserve(t);
  for (std::uint64_t k = 0; k < t; ++k) {
    DensityMap m(w, h);
    for (float& v : m.values) v = r.f32("payload");
    seq.frames.push_back(std::move(m));
  }
  return seq;
}

inline void write_sequence(const DensitySequence& seq, const std::filesystem::path& path) {
  write_file(path, encode_sequence(seq));
}

inline DensitySequence read_sequence(const std::filesystem::path& path) {
  return decode_sequence(read_file(path), path.string());
}

/// `frame,id,x,y` CSV with six-decimal coordinates.
inline std::string encode_annotations(const AnnotationStream& ann) {
  std::string out = "frame,id,x,y\n";
  char line[128];
  for (const auto& a : ann) {
    std::snprintf(line, sizeof line, "%llu,%llu,%.6f,%.6f\n",
                  static_cast<unsigned long long>(a.frame),
                  static_cast<unsigned long long>(a.person_id), a.x, a.y);
    out += line;
  }
  return out;
}

inline AnnotationStream decode_annotations(const std::string& text,
                                           const std::string& what = "annotations") {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (line != "frame,id,x,y")
      throw FormatError(what + ":" + std::to_string(lineno) + ": expected header frame,id,x,y");
    break;
  }
  if (lineno == 0 || line != "frame,id,x,y") throw FormatError(what + ": missing header");

  AnnotationStream ann;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(trim(field));
    const std::string where = what + ":" + std::to_string(lineno);
    if (fields.size() != 4) throw FormatError(where + ": expected 4 fields");
    Annotation a;
    try {
      std::size_t used = 0;
      auto parse_index = [&](const std::string& s) {
        if (s.empty() || s[0] == '-') throw FormatError(where + ": negative or empty index");
        const auto v = std::stoull(s, &used);
        if (used != s.size()) throw FormatError(where + ": malformed index '" + s + "'");
        return static_cast<std::uint64_t>(v);
      };
      auto parse_coord = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v))
          throw FormatError(where + ": malformed coordinate '" + s + "'");
        return v;
      };
      a.frame = parse_index(fields[0]);
      a.person_id = parse_index(fields[1]);
      a.x = parse_coord(fields[2]);
      a.y = parse_coord(fields[3]);
    } catch (const std::logic_error&) {
      throw FormatError(where + ": unparseable number");
    }
    ann.push_back(a);
  }
  return ann;
}

inline void write_annotations(const AnnotationStream& ann, const std::filesystem::path& path) {
  write_file(path, encode_annotations(ann));
}

inline AnnotationStream read_annotations(const std::filesystem::path& path) {
  return decode_annotations(read_file(path), path.string());
}

}  // namespace crowdcast::io
