// Copyright (c) 2026 tdlt contributors
// SPDX-License-Identifier: Apache-2.0
//
// Flat binary container for named float32 tensors. Layout (little-endian):
//   magic "TDLT" | version u32 | count u32 | entries...
// entry: name_len u32 | name bytes | rank u32 | dims u32[rank] | f32 data
// Writes stage to <path>.tmp and rename, so a crash never leaves a torn file.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "tdlt/common.hpp"
#include "tdlt/tensor.hpp"

namespace tdlt {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

inline void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  buf.push_back(static_cast<uint8_t>(v));
  buf.push_back(static_cast<uint8_t>(v >> 8));
  buf.push_back(static_cast<uint8_t>(v >> 16));
  buf.push_back(static_cast<uint8_t>(v >> 24));
}

struct ByteReader {
  const uint8_t* p;
  size_t left;
  explicit ByteReader(const std::vector<uint8_t>& b) : p(b.data()), left(b.size()) {}
  void take(void* dst, size_t n) {
    if (n > left) throw DataError("checkpoint: truncated file");
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
  uint32_t u32() {
    uint8_t b[4];
    take(b, 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }
};

}  // namespace detail

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const NamedTensors& entries) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), {'T', 'D', 'L', 'T'});
  detail::put_u32(buf, kCheckpointVersion);
  detail::put_u32(buf, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::put_u32(buf, static_cast<uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    detail::put_u32(buf, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) detail::put_u32(buf, static_cast<uint32_t>(d));
    size_t off = buf.size();
    buf.resize(off + t.size() * sizeof(float));
    static_assert(sizeof(float) == 4);
    std::memcpy(buf.data() + off, t.data().data(), t.size() * sizeof(float));
  }
  std::string tmp = path + ".tmp";
  std::FILE* f = std::fopen(tmp.c_str(), "wb");
  if (!f) throw DataError("checkpoint: cannot open " + tmp + " for writing");
  size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
  bool ok = written == buf.size() && std::fclose(f) == 0;
  if (!ok) {
    std::remove(tmp.c_str());
    throw DataError("checkpoint: short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("checkpoint: cannot rename " + tmp + " to " + path);
  }
}

inline NamedTensors load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("checkpoint: cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  long len = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  if (len < 0) {
    std::fclose(f);
    throw DataError("checkpoint: cannot stat " + path);
  }
  std::vector<uint8_t> buf(static_cast<size_t>(len));
  size_t got = buf.empty() ? 0 : std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (got != buf.size()) throw DataError("checkpoint: short read from " + path);

  detail::ByteReader rd(buf);
  char magic[4];
  rd.take(magic, 4);
  if (std::memcmp(magic, "TDLT", 4) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  uint32_t version = rd.u32();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  uint32_t count = rd.u32();
  NamedTensors out;
  out.reserve(count);
  for (uint32_t e = 0; e < count; ++e) {
    uint32_t name_len = rd.u32();
    if (name_len > (1u << 20)) throw DataError("checkpoint: absurd name length");
    std::string name(name_len, '\0');
    rd.take(name.data(), name_len);
    uint32_t rank = rd.u32();
    if (rank > 32) throw DataError("checkpoint: absurd tensor rank");
    std::vector<int> shape(rank);
    uint64_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint32_t dim = rd.u32();
      if (dim > (1u << 30)) throw DataError("checkpoint: absurd dimension");
      shape[d] = static_cast<int>(dim);
      n *= dim;
    }
    if (n * sizeof(float) > rd.left) throw DataError("checkpoint: truncated file");
    std::vector<float> data(n);
    rd.take(data.data(), n * sizeof(float));
    out.emplace_back(std::move(name), Tensor::from_vector(std::move(shape), std::move(data)));
  }
  if (rd.left != 0) throw DataError("checkpoint: trailing bytes in " + path);
  return out;
}

// Lookup helper; throws DataError when `name` is absent.
inline const Tensor& find_tensor(const NamedTensors& entries,
                                 const std::string& name) {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  throw DataError("checkpoint: missing tensor '" + name + "'");
}

inline bool has_tensor(const NamedTensors& entries, const std::string& name) {
  for (const auto& [n, t] : entries)
    if (n == name) return true;
  return false;
}

}  // namespace tdlt
