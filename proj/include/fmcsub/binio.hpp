// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_BINIO_HPP
#define FMCSUB_BINIO_HPP

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "fmcsub/core.hpp"

namespace fmcsub::binio {

/// Little-endian serializer into an in-memory byte string.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }
  void c128(cplx v) {
    f64(v.real());
    f64(v.imag());
  }
  void raw(std::string_view bytes) { buf_.append(bytes); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  void f64_array(const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) f64(data[i]);
  }
  void c128_array(const cplx* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c128(data[i]);
  }

  const std::string& bytes() const noexcept { return buf_; }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::string buf_;
};

/// Bounds-checked little-endian reader; short reads raise FormatError.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : data_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  double f64() { return std::bit_cast<double>(get_le(8)); }
  cplx c128() {
    const double re = f64();
    return {re, f64()};
  }
  std::string_view raw(std::size_t n) { return take(n); }
  std::string str() { return std::string(raw(u32())); }
  void f64_array(double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f64();
  }
  void c128_array(cplx* out, std::size_t n) {
    need(n * 16);
    for (std::size_t i = 0; i < n; ++i) out[i] = c128();
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw FormatError("trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("truncated file");
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint64_t get_le(int n) {
    auto b = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

/// Writes a container header: 7-byte magic followed by a version byte.
inline void write_magic(ByteWriter& w, std::string_view magic, std::uint8_t version) {
  require(magic.size() == 7, "magic must be 7 bytes");
  w.raw(magic);
  w.u8(version);
}

inline void read_magic(ByteReader& r, std::string_view magic, std::uint8_t version) {
  if (r.remaining() < 8) throw FormatError("truncated file");
  if (r.raw(7) != magic) throw FormatError("bad magic bytes, expected " + std::string(magic));
  const auto v = r.u8();
  if (v != version) {
    throw FormatError("unsupported version " + std::to_string(v) + " (expected " + std::to_string(version) + ")");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

}  // namespace fmcsub::binio

#endif  // FMCSUB_BINIO_HPP
