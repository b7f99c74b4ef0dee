#pragma once

#include <array>
#include <string>

#include "prolat/error.hpp"

namespace prolat {

// Standard-alphabet base64 with mandatory padding. Decoding is strict: it
// rejects whitespace, bad lengths, misplaced padding and non-canonical
// encodings (nonzero discarded bits in the final quantum).

inline std::string base64_encode(const std::string& in) {
  static const char* tbl =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= in.size()) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8) |
                       static_cast<unsigned char>(in[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
    i += 3;
  }
  const std::size_t rem = in.size() - i;
  if (rem == 1) {
    const unsigned v = static_cast<unsigned char>(in[i]) << 16;
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::string base64_decode(const std::string& in) {
  static const std::array<signed char, 256> rev = [] {
    std::array<signed char, 256> t{};
    t.fill(-1);
    const char* tbl =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(tbl[i])] = static_cast<signed char>(i);
    return t;
  }();
  if (in.size() % 4 != 0) throw SerializationError("base64: length not a multiple of 4");
  std::string out;
  out.reserve(in.size() / 4 * 3);
  for (std::size_t i = 0; i < in.size(); i += 4) {
    const bool last = i + 4 == in.size();
    int pad = 0;
    int vals[4];
    for (int k = 0; k < 4; ++k) {
      const char ch = in[i + k];
      if (ch == '=') {
        if (!last || k < 2) throw SerializationError("base64: misplaced padding");
        if (k == 2 && in[i + 3] != '=') throw SerializationError("base64: misplaced padding");
        ++pad;
        vals[k] = 0;
      } else {
        if (pad > 0) throw SerializationError("base64: data after padding");
        const signed char v = rev[static_cast<unsigned char>(ch)];
        if (v < 0) throw SerializationError("base64: invalid character");
        vals[k] = v;
      }
    }
    const unsigned v =
        (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | static_cast<unsigned>(vals[3]);
    // canonical form: discarded bits must be zero
    if (pad == 1 && (v & 0xff) != 0)
      throw SerializationError("base64: non-canonical final quantum");
    if (pad == 2 && (v & 0xffff) != 0)
      throw SerializationError("base64: non-canonical final quantum");
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

}  // namespace prolat
