#pragma once

// CDFW checkpoint: magic, u32 version, u32 tensor count, then per tensor
// u16 name length, UTF-8 name, u8 rank, u32 extents, f32 payload. All
// integers and floats are little-endian.

#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "crowdcast/io.hpp"
#include "crowdcast/tensor.hpp"

namespace crowdcast::io {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out = "CDFW";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw InputError("checkpoint: tensor name too long");
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) detail::put_f32(out, v);
  }
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(std::string bytes,
                                                  const std::string& what = "checkpoint") {
  detail::Reader r(std::move(bytes), what);
  r.expect_magic("CDFW");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor nt;
    nt.name = r.text(r.u16("name length"), "name");
    const std::uint8_t rank = r.u8("rank");
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t e = r.u32("extent");
      if (e == 0) throw FormatError(what + ": zero extent in tensor " + nt.name);
      elements *= e;
      if (elements > r.remaining()) throw FormatError(what + ": truncated tensor " + nt.name);
      shape.push_back(e);
    }
    r.need(elements * 4, "payload");
    std::vector<float> data(elements);
    for (float& v : data) v = r.f32("payload");
    nt.value = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after last tensor");
  return out;
}

inline void write_checkpoint(const std::vector<NamedTensor>& tensors,
                             const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(tensors));
}

inline std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace crowdcast::io
