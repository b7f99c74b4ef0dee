#pragma once

#include <string>
#include <vector>

#include "prolat/matrix.hpp"

namespace prolat {

// Level boundaries: K near-equal increments over n tokens, the earlier
// chunks taking the remainder. boundaries[k-1] is the cumulative token
// count once chunks 1..k have been delivered; boundaries.back() == n.
inline std::vector<int> make_boundaries(int n_tokens, int k_levels) {
  if (k_levels < 1 || k_levels > n_tokens)
    throw ConfigError("make_boundaries: need 1 <= k <= n, got k=" +
                      std::to_string(k_levels) + " n=" + std::to_string(n_tokens));
  std::vector<int> out(static_cast<std::size_t>(k_levels));
  const int base = n_tokens / k_levels;
  const int extra = n_tokens % k_levels;
  int acc = 0;
  for (int k = 0; k < k_levels; ++k) {
    acc += base + (k < extra ? 1 : 0);
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

// Encoder output: N_r ordered transmission tokens with K level boundaries.
struct OrderedRepr {
  Matrix tokens;                // N_r x d_m
  std::vector<int> boundaries;  // strictly increasing, last == N_r

  int levels() const { return static_cast<int>(boundaries.size()); }

  void validate() const {
    if (boundaries.empty()) throw ConfigError("OrderedRepr: no boundaries");
    int prev = 0;
    for (int b : boundaries) {
      if (b <= prev) throw ConfigError("OrderedRepr: boundaries not strictly increasing");
      prev = b;
    }
    if (boundaries.back() != tokens.rows)
      throw ConfigError("OrderedRepr: last boundary must equal token count");
  }
};

// Rows 0..boundaries[level-1] copied verbatim, the rest exactly zero.
inline Matrix prefix_mask(const OrderedRepr& r, int level) {
  if (level < 1 || level > r.levels())
    throw ArgumentError("prefix_mask: level " + std::to_string(level) + " out of range");
  Matrix out(r.tokens.rows, r.tokens.cols);
  const int keep = r.boundaries[static_cast<std::size_t>(level - 1)];
  std::copy(r.tokens.data.begin(),
            r.tokens.data.begin() + static_cast<std::ptrdiff_t>(keep) * r.tokens.cols,
            out.data.begin());
  return out;
}

// The level-th chunk: rows [boundaries[level-2], boundaries[level-1]).
inline Matrix chunk_at(const OrderedRepr& r, int level) {
  if (level < 1 || level > r.levels())
    throw ArgumentError("chunk_at: level " + std::to_string(level) + " out of range");
  const int lo = level == 1 ? 0 : r.boundaries[static_cast<std::size_t>(level - 2)];
  const int hi = r.boundaries[static_cast<std::size_t>(level - 1)];
  Matrix out(hi - lo, r.tokens.cols);
  std::copy(r.tokens.row(lo), r.tokens.row(lo) + out.size(), out.data.begin());
  return out;
}

// Receiver-side accumulation state. level 0 means nothing received yet.
struct PartialRepr {
  int level = 0;
  Matrix received;              // boundaries[level-1] rows once level >= 1
  std::vector<int> boundaries;

  static PartialRepr empty(std::vector<int> boundaries, int d_m) {
    PartialRepr p;
    p.boundaries = std::move(boundaries);
    p.received = Matrix(0, d_m);
    return p;
  }

  int levels() const { return static_cast<int>(boundaries.size()); }
  int n_tokens() const { return boundaries.back(); }

  // Received prefix zero-extended to the full N_r x d_m shape, i.e. the
  // same matrix prefix_mask() produces on the sender side.
  Matrix masked_matrix() const {
    Matrix out(n_tokens(), received.cols);
    std::copy(received.data.begin(), received.data.end(), out.data.begin());
    return out;
  }
};

// Appends the chunk declared as `incoming_level`; chunks must arrive
// strictly in order and with the exact expected row count.
inline PartialRepr accumulate(const PartialRepr& p, const Matrix& chunk,
                              int incoming_level) {
  if (incoming_level != p.level + 1)
    throw ProtocolError("accumulate: got chunk for level " + std::to_string(incoming_level) +
                        " while at level " + std::to_string(p.level));
  if (incoming_level > p.levels())
    throw ProtocolError("accumulate: level beyond last boundary");
  const int lo = p.level == 0 ? 0 : p.boundaries[static_cast<std::size_t>(p.level - 1)];
  const int hi = p.boundaries[static_cast<std::size_t>(incoming_level - 1)];
  if (chunk.rows != hi - lo || chunk.cols != p.received.cols)
    throw ProtocolError("accumulate: chunk shape " + std::to_string(chunk.rows) + "x" +
                        std::to_string(chunk.cols) + ", expected " +
                        std::to_string(hi - lo) + "x" + std::to_string(p.received.cols));
  PartialRepr next;
  next.level = incoming_level;
  next.boundaries = p.boundaries;
  next.received = Matrix(hi, p.received.cols);
  std::copy(p.received.data.begin(), p.received.data.end(), next.received.data.begin());
  std::copy(chunk.data.begin(), chunk.data.end(),
            next.received.data.begin() + static_cast<std::ptrdiff_t>(lo) * chunk.cols);
  return next;
}

}  // namespace prolat
