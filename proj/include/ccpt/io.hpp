#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccpt/tensor.hpp"

namespace ccpt {

// shortest round-trip decimal form of a double
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// write-temp-then-rename so readers never observe a partial file
inline void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// 64-bit FNV-1a over the little-endian bytes of an int sequence
inline std::string fnv1a_digest(const std::vector<int>& values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (int v : values) {
    const auto u = std::uint32_t(v);
    for (int shift = 0; shift < 32; shift += 8) {
      h ^= (u >> shift) & 0xffu;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoints. Flat binary layout, little-endian throughout:
//   bytes 0..3   magic "CCPT"
//   byte  4      format version (1)
//   u32          tensor count
//   per tensor:  u32 rank, rank x u32 dims, prod(dims) x f32 data

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(char((v >> shift) & 0xffu));
}

inline std::uint32_t get_u32le(const std::vector<unsigned char>& b, std::size_t& off) {
  if (off + 4 > b.size()) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int shift = 0; shift < 32; shift += 8) v |= std::uint32_t(b[off++]) << shift;
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<Tensor>& tensors) {
  std::string out = "CCPT";
  out.push_back(char(1));
  detail::put_u32le(out, std::uint32_t(tensors.size()));
  for (const auto& t : tensors) {
    detail::put_u32le(out, std::uint32_t(t.shape.size()));
    for (int d : t.shape) detail::put_u32le(out, std::uint32_t(d));
    for (float v : t.data) {
      std::uint32_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      detail::put_u32le(out, bits);
    }
  }
  atomic_write_file(path, out);
}

inline std::vector<Tensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>()};
  if (bytes.size() < 5 || bytes[0] != 'C' || bytes[1] != 'C' || bytes[2] != 'P' ||
      bytes[3] != 'T')
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (bytes[4] != 1) throw std::runtime_error("checkpoint: unsupported version in " + path);

  std::size_t off = 5;
  const std::uint32_t count = detail::get_u32le(bytes, off);
  std::vector<Tensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rank = detail::get_u32le(bytes, off);
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t d = detail::get_u32le(bytes, off);
      shape.push_back(int(d));
      n *= d;
    }
    Tensor t(shape);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t bits = detail::get_u32le(bytes, off);
      float v;
      std::memcpy(&v, &bits, sizeof(v));
      t.data[k] = v;
    }
    tensors.push_back(std::move(t));
  }
  return tensors;
}

}  // namespace ccpt
