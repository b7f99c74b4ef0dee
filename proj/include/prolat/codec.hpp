#pragma once

#include <cmath>
#include <string>

#include "prolat/bytes.hpp"
#include "prolat/matrix.hpp"
#include "prolat/repr.hpp"

namespace prolat {

// Decoder output at a given level: reconstruction, predicted error and the
// bounded quality score q = exp(-e_hat).
struct DecodeResult {
  Matrix z_hat;       // N_z x d_z
  double e_hat = 0.0; // predicted mean-squared reconstruction error, >= 0
  double q = 1.0;     // exp(-e_hat), in (0, 1]
};

inline double quality_from_error(double e_hat) { return std::exp(-e_hat); }

// Mean squared error per entry. Summed L2 at realistic latent sizes would
// pin q = exp(-e) to zero for any imperfect reconstruction; the per-entry
// mean keeps the quality score usable as a threshold.
inline double true_error(const Matrix& z_hat, const Matrix& z) {
  if (!z_hat.same_shape(z)) throw ArgumentError("true_error: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double d = z_hat.data[i] - z.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(z.size());
}

// Shared surface of the two codecs. encode/decode are pure and safe to call
// concurrently once the codec is built.
class Codec {
 public:
  virtual ~Codec() = default;

  virtual OrderedRepr encode(const Matrix& z) const = 0;

  // `masked` must be a full-length N_r x d_m matrix with rows beyond the
  // level-`level` boundary zeroed (prefix_mask or PartialRepr::masked_matrix).
  virtual DecodeResult decode(const Matrix& masked, int level) const = 0;

  virtual int levels() const = 0;
  virtual const std::vector<int>& boundaries() const = 0;
  virtual int token_count() const = 0;  // N_r == N_z
  virtual int token_dim() const = 0;    // d_m, the wire width
  virtual int latent_dim() const = 0;   // d_z

  virtual std::string serialize() const = 0;
  virtual std::string kind() const = 0;

  std::string checksum() const { return fnv1a64_hex(serialize()); }

  void save(const std::string& path) const { write_file(path, serialize()); }
};

}  // namespace prolat
