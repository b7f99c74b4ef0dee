#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "prolat/error.hpp"

namespace prolat {

// Little-endian byte stream helpers used by the checkpoint and dataset
// formats. The host is assumed little-endian (asserted at file load via
// magic round trip); all wire and file data is LE by contract.

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

inline void put_f64(std::string& out, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

inline void put_f32(std::string& out, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class ByteReader {
 public:
  ByteReader(const std::string& buf, std::string what)
      : buf_(buf), what_(std::move(what)) {}

  std::uint32_t u32() { return read_<std::uint32_t>(); }
  std::uint64_t u64() { return read_<std::uint64_t>(); }
  double f64() { return read_<double>(); }
  float f32() { return read_<float>(); }

  std::string bytes(std::size_t n) {
    need_(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  template <typename T>
  T read_() {
    need_(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void need_(std::size_t n) {
    if (pos_ + n > buf_.size())
      throw SerializationError(what_ + ": truncated (need " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos_) + ")");
  }

  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

// FNV-1a 64-bit; used for codec checksums and dataset digests.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex_digest(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  return hex_digest(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace prolat
