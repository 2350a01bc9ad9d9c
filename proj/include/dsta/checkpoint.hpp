#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dsta/tensor.hpp"

// Checkpoint container, layout documented in docs/FORMATS.md:
//
//   magic   8 bytes  "DSTACKPT"
//   u32     format version (1)
//   u32     reserved (0)
//   u64     byte offset of the index section
//   u32     config length, followed by that many bytes of config JSON
//   records, one per parameter in registry order:
//     u32   name length, name bytes
//     u32   rank, u64 dims[rank]
//     f32   payload, prod(dims) little-endian IEEE-754 floats
//   index section:
//     u32   record count
//     per record: u32 name length, name bytes, u64 record byte offset
//
// All integers little-endian. Values are stored as 32-bit floats.

namespace dsta {

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& buf, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(buf, v);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, std::string context)
      : data_(data), context_(std::move(context)) {}

  void seek(std::size_t pos) {
    if (pos > data_.size()) fail("seek past end of file");
    pos_ = pos;
  }
  std::size_t pos() const { return pos_; }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(context_ + ": " + what + " (at byte " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) fail("truncated file");
  }
  const std::string& data_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace detail

struct CheckpointParam {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string config_json;
  std::vector<CheckpointParam> params;

  const CheckpointParam* find(const std::string& name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
};

inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'T', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string encode_checkpoint(const std::string& config_json,
                                     const std::vector<ParameterPtr>& params) {
  std::string buf;
  buf.append(kCheckpointMagic, 8);
  detail::put_u32(buf, kCheckpointVersion);
  detail::put_u32(buf, 0);
  const std::size_t index_offset_pos = buf.size();
  detail::put_u64(buf, 0);  // patched below
  detail::put_u32(buf, static_cast<std::uint32_t>(config_json.size()));
  buf.append(config_json);

  std::vector<std::pair<std::string, std::uint64_t>> index;
  index.reserve(params.size());
  for (const auto& p : params) {
    index.emplace_back(p->name, buf.size());
    detail::put_u32(buf, static_cast<std::uint32_t>(p->name.size()));
    buf.append(p->name);
    detail::put_u32(buf, static_cast<std::uint32_t>(p->tensor.ndim()));
    for (std::size_t d = 0; d < p->tensor.ndim(); ++d)
      detail::put_u64(buf, p->tensor.dim(d));
    for (double v : p->tensor.values()) detail::put_f32(buf, static_cast<float>(v));
  }

  const std::uint64_t index_offset = buf.size();
  detail::put_u32(buf, static_cast<std::uint32_t>(index.size()));
  for (const auto& [name, off] : index) {
    detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    detail::put_u64(buf, off);
  }
  for (int i = 0; i < 8; ++i)
    buf[index_offset_pos + i] = static_cast<char>((index_offset >> (8 * i)) & 0xff);
  return buf;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::string& config_json,
                            const std::vector<ParameterPtr>& params) {
  const std::string buf = encode_checkpoint(config_json, params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open checkpoint for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ParseError("failed writing checkpoint: " + path.string());
}

inline Checkpoint decode_checkpoint(const std::string& data, const std::string& context) {
  detail::ByteReader r(data, context);
  if (data.size() < 8 || std::memcmp(data.data(), kCheckpointMagic, 8) != 0) {
    throw ParseError(context + ": not a checkpoint file (bad magic)");
  }
  r.seek(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError(context + ": unsupported checkpoint version " + std::to_string(version));
  }
  r.u32();  // reserved
  const std::uint64_t index_offset = r.u64();
  const std::uint32_t config_len = r.u32();
  Checkpoint ckpt;
  ckpt.config_json = r.bytes(config_len);

  r.seek(index_offset);
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, std::uint64_t>> index;
  index.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    index.emplace_back(std::move(name), r.u64());
  }

  for (const auto& [name, off] : index) {
    r.seek(off);
    const std::uint32_t name_len = r.u32();
    const std::string rec_name = r.bytes(name_len);
    if (rec_name != name) r.fail("index entry does not match record name");
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(r.u64());
      numel *= shape[d];
    }
    CheckpointParam p;
    p.name = rec_name;
    p.shape = std::move(shape);
    p.values.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) p.values[i] = static_cast<double>(r.f32());
    ckpt.params.push_back(std::move(p));
  }
  return ckpt;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(data, path.string());
}

}  // namespace dsta
