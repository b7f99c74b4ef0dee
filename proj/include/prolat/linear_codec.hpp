#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "prolat/codec.hpp"
#include "prolat/dataset.hpp"

namespace prolat {

// Analytically progressive codec built from principal directions of the
// token distribution. Reconstruction error is exactly non-increasing in the
// transmission level, which makes it the executable oracle for the trained
// codec's monotonicity property.
//
// Layout: the N_z x d_z coefficient matrix C = (z - mean) B is written into
// the representation in direction-major order, coefficient (token t,
// direction j) at flat slot j * N_z + t. A token prefix of the representation
// therefore always carries the highest-variance directions first, and each
// chunk holds the coefficient block of the directions assigned to it when
// the shapes divide evenly.
class LinearOrthoCodec : public Codec {
 public:
  LinearOrthoCodec() = default;

  OrderedRepr encode(const Matrix& z) const override {
    if (z.rows != n_tokens_ || z.cols != d_latent_)
      throw ArgumentError("LinearOrthoCodec::encode: latent shape mismatch");
    Matrix centered(z.rows, z.cols);
    for (int t = 0; t < z.rows; ++t)
      for (int j = 0; j < z.cols; ++j)
        centered.at(t, j) = z.at(t, j) - mean_.at(0, j);
    Matrix coeff;
    matmul(centered, basis_, coeff);  // N x d, column j = direction j
    OrderedRepr r;
    r.tokens = Matrix(n_tokens_, d_latent_);
    r.boundaries = boundaries_;
    for (int j = 0; j < d_latent_; ++j)
      for (int t = 0; t < n_tokens_; ++t)
        r.tokens.data[static_cast<std::size_t>(j) * n_tokens_ + t] = coeff.at(t, j);
    return r;
  }

  DecodeResult decode(const Matrix& masked, int level) const override {
    if (level < 1 || level > levels())
      throw ArgumentError("LinearOrthoCodec::decode: level out of range");
    if (masked.rows != n_tokens_ || masked.cols != d_latent_)
      throw ArgumentError("LinearOrthoCodec::decode: masked shape mismatch");
    const std::size_t avail =
        static_cast<std::size_t>(boundaries_[static_cast<std::size_t>(level - 1)]) *
        d_latent_;
    Matrix coeff(n_tokens_, d_latent_);
    for (std::size_t p = 0; p < avail; ++p) {
      const int j = static_cast<int>(p / static_cast<std::size_t>(n_tokens_));
      const int t = static_cast<int>(p % static_cast<std::size_t>(n_tokens_));
      coeff.at(t, j) = masked.data[p];
    }
    DecodeResult out;
    matmul_nt(coeff, basis_, out.z_hat);
    for (int t = 0; t < n_tokens_; ++t)
      for (int j = 0; j < d_latent_; ++j) out.z_hat.at(t, j) += mean_.at(0, j);
    // The cloud cannot see the discarded coefficients, so protocol-time
    // e_hat is the stored training-set mean for this level.
    out.e_hat = level_mean_err_[static_cast<std::size_t>(level - 1)];
    out.q = quality_from_error(out.e_hat);
    return out;
  }

  // Evaluation-mode exact error: the energy of the coefficients beyond the
  // level boundary, averaged per latent entry. Equal (up to fp) to the true
  // reconstruction MSE because the basis is orthonormal.
  double sample_error(const Matrix& z, int level) const {
    OrderedRepr r = encode(z);
    return dropped_energy(r, level);
  }

  double dropped_energy(const OrderedRepr& r, int level) const {
    if (level < 1 || level > levels())
      throw ArgumentError("LinearOrthoCodec::dropped_energy: level out of range");
    const std::size_t avail =
        static_cast<std::size_t>(boundaries_[static_cast<std::size_t>(level - 1)]) *
        d_latent_;
    double acc = 0.0;
    for (std::size_t p = avail; p < r.tokens.size(); ++p)
      acc += r.tokens.data[p] * r.tokens.data[p];
    return acc / static_cast<double>(r.tokens.size());
  }

  int levels() const override { return static_cast<int>(boundaries_.size()); }
  const std::vector<int>& boundaries() const override { return boundaries_; }
  int token_count() const override { return n_tokens_; }
  int token_dim() const override { return d_latent_; }
  int latent_dim() const override { return d_latent_; }
  std::string kind() const override { return "linear-ortho"; }

  const Matrix& basis() const { return basis_; }
  const Matrix& mean() const { return mean_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  const std::vector<double>& level_mean_errors() const { return level_mean_err_; }

  std::string serialize() const override {
    std::string out = "PLO1";
    put_u32(out, static_cast<std::uint32_t>(n_tokens_));
    put_u32(out, static_cast<std::uint32_t>(d_latent_));
    put_u32(out, static_cast<std::uint32_t>(boundaries_.size()));
    for (int b : boundaries_) put_u32(out, static_cast<std::uint32_t>(b));
    for (double v : mean_.data) put_f64(out, v);
    for (double v : basis_.data) put_f64(out, v);
    for (double v : eigenvalues_) put_f64(out, v);
    for (double v : level_mean_err_) put_f64(out, v);
    return out;
  }

  static LinearOrthoCodec deserialize(const std::string& bytes) {
    ByteReader r(bytes, "PLO1 checkpoint");
    if (r.bytes(4) != "PLO1") throw SerializationError("bad linear codec magic");
    LinearOrthoCodec c;
    c.n_tokens_ = static_cast<int>(r.u32());
    c.d_latent_ = static_cast<int>(r.u32());
    const std::uint32_t k = r.u32();
    c.boundaries_.resize(k);
    for (auto& b : c.boundaries_) b = static_cast<int>(r.u32());
    c.mean_ = Matrix(1, c.d_latent_);
    for (double& v : c.mean_.data) v = r.f64();
    c.basis_ = Matrix(c.d_latent_, c.d_latent_);
    for (double& v : c.basis_.data) v = r.f64();
    c.eigenvalues_.resize(static_cast<std::size_t>(c.d_latent_));
    for (double& v : c.eigenvalues_) v = r.f64();
    c.level_mean_err_.resize(k);
    for (double& v : c.level_mean_err_) v = r.f64();
    if (!r.at_end()) throw SerializationError("trailing bytes in linear codec file");
    return c;
  }

  friend LinearOrthoCodec fit_linear_oracle(const Dataset& data, std::uint64_t seed,
                                            int k_levels, double tol, int max_iter);

 private:
  int n_tokens_ = 0;
  int d_latent_ = 0;
  std::vector<int> boundaries_;
  Matrix mean_;   // 1 x d_z
  Matrix basis_;  // d_z x d_z, column j = j-th principal direction
  std::vector<double> eigenvalues_;
  std::vector<double> level_mean_err_;
};

// Mean-centered token covariance, eigenbasis via iterated power method with
// explicit deflation. Convergence is declared when the residual
// ||A v - theta v|| falls below tol * total_variance.
inline LinearOrthoCodec fit_linear_oracle(const Dataset& data, std::uint64_t seed,
                                          int k_levels, double tol = 1e-10,
                                          int max_iter = 10000) {
  const int d = data.d_latent;
  const int n = data.n_tokens;
  if (data.count() < d)
    throw ConfigError("fit_linear_oracle: need at least d_z samples, got " +
                      std::to_string(data.count()));
  LinearOrthoCodec c;
  c.n_tokens_ = n;
  c.d_latent_ = d;
  c.boundaries_ = make_boundaries(n, k_levels);

  // token mean and covariance over all samples' tokens
  const std::size_t m_tokens = static_cast<std::size_t>(data.count()) * n;
  c.mean_ = Matrix(1, d);
  for (const Matrix& s : data.samples)
    for (int t = 0; t < n; ++t)
      for (int j = 0; j < d; ++j) c.mean_.at(0, j) += s.at(t, j);
  for (double& v : c.mean_.data) v /= static_cast<double>(m_tokens);

  Matrix centered(static_cast<int>(m_tokens), d);
  int row = 0;
  for (const Matrix& s : data.samples)
    for (int t = 0; t < n; ++t, ++row)
      for (int j = 0; j < d; ++j) centered.at(row, j) = s.at(t, j) - c.mean_.at(0, j);
  Matrix cov;
  matmul_tn(centered, centered, cov);
  for (double& v : cov.data) v /= static_cast<double>(m_tokens);

  double total_var = 0.0;
  for (int j = 0; j < d; ++j) total_var += cov.at(j, j);
  const double scale = std::max(total_var, 1e-300);

  Matrix deflated = cov;
  c.basis_ = Matrix(d, d);
  c.eigenvalues_.assign(static_cast<std::size_t>(d), 0.0);
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(d)), w(static_cast<std::size_t>(d));

  auto orthogonalize = [&](std::vector<double>& u, int found) {
    for (int b = 0; b < found; ++b) {
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += u[static_cast<std::size_t>(i)] * c.basis_.at(i, b);
      for (int i = 0; i < d; ++i) u[static_cast<std::size_t>(i)] -= dot * c.basis_.at(i, b);
    }
  };
  auto normalize = [&](std::vector<double>& u) {
    double nn = 0.0;
    for (double x : u) nn += x * x;
    nn = std::sqrt(nn);
    if (nn < 1e-200) return false;
    for (double& x : u) x /= nn;
    return true;
  };

  for (int dir = 0; dir < d; ++dir) {
    for (auto& x : v) x = rng.gaussian();
    orthogonalize(v, dir);
    if (!normalize(v))
      throw NumericError("fit_linear_oracle: degenerate start vector at direction " +
                         std::to_string(dir));
    double theta = 0.0;
    bool converged = false;
    for (int it = 0; it < max_iter; ++it) {
      // w = deflated * v
      for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        const double* ar = deflated.row(i);
        for (int j = 0; j < d; ++j) acc += ar[j] * v[static_cast<std::size_t>(j)];
        w[static_cast<std::size_t>(i)] = acc;
      }
      orthogonalize(w, dir);
      theta = 0.0;
      for (int i = 0; i < d; ++i) theta += v[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
      double resid = 0.0;
      for (int i = 0; i < d; ++i) {
        const double rdiff = w[static_cast<std::size_t>(i)] - theta * v[static_cast<std::size_t>(i)];
        resid += rdiff * rdiff;
      }
      if (std::sqrt(resid) <= tol * scale) {
        converged = true;
        break;
      }
      if (!normalize(w)) {
        // deflated matrix annihilates v: v already spans a null direction
        theta = 0.0;
        converged = true;
        break;
      }
      std::swap(v, w);
    }
    if (!converged)
      throw NumericError("fit_linear_oracle: power iteration did not converge at direction " +
                         std::to_string(dir));
    const double lambda = std::max(theta, 0.0);
    c.eigenvalues_[static_cast<std::size_t>(dir)] = lambda;
    for (int i = 0; i < d; ++i) c.basis_.at(i, dir) = v[static_cast<std::size_t>(i)];
    // explicit deflation
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        deflated.at(i, j) -= lambda * v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)];
  }

  // enforce non-increasing variance order (near-ties can arrive swapped)
  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return c.eigenvalues_[static_cast<std::size_t>(a)] > c.eigenvalues_[static_cast<std::size_t>(b)];
  });
  Matrix sorted_basis(d, d);
  std::vector<double> sorted_eig(static_cast<std::size_t>(d));
  for (int jj = 0; jj < d; ++jj) {
    const int src = order[static_cast<std::size_t>(jj)];
    sorted_eig[static_cast<std::size_t>(jj)] = c.eigenvalues_[static_cast<std::size_t>(src)];
    for (int i = 0; i < d; ++i) sorted_basis.at(i, jj) = c.basis_.at(i, src);
  }
  c.basis_ = std::move(sorted_basis);
  c.eigenvalues_ = std::move(sorted_eig);

  // stored per-level mean errors over the fitting set (protocol-time e_hat)
  c.level_mean_err_.assign(static_cast<std::size_t>(k_levels), 0.0);
  for (const Matrix& s : data.samples) {
    OrderedRepr r = c.encode(s);
    for (int l = 1; l <= k_levels; ++l)
      c.level_mean_err_[static_cast<std::size_t>(l - 1)] += c.dropped_energy(r, l);
  }
  for (double& e : c.level_mean_err_) e /= static_cast<double>(data.count());
  return c;
}

}  // namespace prolat
