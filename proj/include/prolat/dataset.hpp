#pragma once

#include <string>
#include <vector>

#include "prolat/bytes.hpp"
#include "prolat/matrix.hpp"
#include "prolat/rng.hpp"

namespace prolat {

// A stand-in for the frozen upstream vision encoder: a bag of latent token
// matrices of fixed shape N_z x d_z.
struct Dataset {
  int n_tokens = 0;  // N_z
  int d_latent = 0;  // d_z
  std::vector<Matrix> samples;

  int count() const { return static_cast<int>(samples.size()); }

  // File format: magic "PSD1", u32 n_samples, u32 N_z, u32 d_z, then each
  // sample row-major as little-endian float32.
  std::string serialize() const {
    std::string out = "PSD1";
    put_u32(out, static_cast<std::uint32_t>(samples.size()));
    put_u32(out, static_cast<std::uint32_t>(n_tokens));
    put_u32(out, static_cast<std::uint32_t>(d_latent));
    for (const Matrix& s : samples)
      for (double v : s.data) put_f32(out, static_cast<float>(v));
    return out;
  }

  static Dataset deserialize(const std::string& bytes) {
    ByteReader r(bytes, "PSD1 dataset");
    if (r.bytes(4) != "PSD1") throw SerializationError("bad dataset magic");
    Dataset d;
    const std::uint32_t n_samples = r.u32();
    d.n_tokens = static_cast<int>(r.u32());
    d.d_latent = static_cast<int>(r.u32());
    d.samples.reserve(n_samples);
    for (std::uint32_t i = 0; i < n_samples; ++i) {
      Matrix m(d.n_tokens, d.d_latent);
      for (double& v : m.data) v = static_cast<double>(r.f32());
      d.samples.push_back(std::move(m));
    }
    if (!r.at_end()) throw SerializationError("trailing bytes in dataset file");
    return d;
  }

  void save(const std::string& path) const { write_file(path, serialize()); }

  static Dataset load(const std::string& path) { return deserialize(read_file(path)); }

  // Held-out split: last 12.5% of the samples by index.
  std::pair<std::vector<const Matrix*>, std::vector<const Matrix*>> split() const {
    const int held = count() / 8;
    const int train = count() - held;
    std::vector<const Matrix*> tr, ho;
    for (int i = 0; i < train; ++i) tr.push_back(&samples[static_cast<std::size_t>(i)]);
    for (int i = train; i < count(); ++i) ho.push_back(&samples[static_cast<std::size_t>(i)]);
    return {tr, ho};
  }
};

struct SyntheticSpec {
  int n_samples = 2048;
  int n_tokens = 16;
  int d_latent = 32;
  int rank = 12;
  double noise_std = 0.02;
  std::uint64_t seed = 1;
};

// Tokens are a low-rank factor product plus Gaussian noise: one shared
// rank x d_z factor per dataset, per-sample N_z x rank coefficients. The
// shared factor is scaled 1/sqrt(rank) so token entries have ~unit variance.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.rank < 1 || spec.rank > spec.d_latent)
    throw ConfigError("gen_synthetic: rank must be in [1, d_latent]");
  if (spec.noise_std < 0) throw ConfigError("gen_synthetic: negative noise_std");
  Rng rng(spec.seed);
  const double fscale = 1.0 / std::sqrt(static_cast<double>(spec.rank));
  Matrix factor = random_gaussian(spec.rank, spec.d_latent, rng, fscale);
  Dataset d;
  d.n_tokens = spec.n_tokens;
  d.d_latent = spec.d_latent;
  d.samples.reserve(static_cast<std::size_t>(spec.n_samples));
  Matrix coeff(spec.n_tokens, spec.rank);
  for (int i = 0; i < spec.n_samples; ++i) {
    for (double& v : coeff.data) v = rng.gaussian();
    Matrix s;
    matmul(coeff, factor, s);
    if (spec.noise_std > 0)
      for (double& v : s.data) v += rng.gaussian() * spec.noise_std;
    // latents stand for float32 encoder output; quantize so the in-memory
    // dataset and the PSD1 file carry identical values
    for (double& v : s.data) v = static_cast<double>(static_cast<float>(v));
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace prolat
