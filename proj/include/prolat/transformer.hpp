#pragma once

#include <cmath>
#include <vector>

#include "prolat/matrix.hpp"
#include "prolat/param_store.hpp"

namespace prolat {

// Pre-norm Transformer encoder block, batched as one (batch * n_tokens) x d
// matrix so the projections run as single GEMMs. Backward passes are
// hand-derived; the finite-difference suite is the contract for them.

inline void add_bias(Matrix& x, const Matrix& b) {
  for (int i = 0; i < x.rows; ++i) {
    double* r = x.row(i);
    const double* bb = b.data.data();
    for (int j = 0; j < x.cols; ++j) r[j] += bb[j];
  }
}

inline void bias_grad(const Matrix& dy, Matrix& db) {
  for (int i = 0; i < dy.rows; ++i) {
    const double* r = dy.row(i);
    double* g = db.data.data();
    for (int j = 0; j < dy.cols; ++j) g[j] += r[j];
  }
}

// Numerically stable in-place softmax over one row.
inline void softmax_row(double* x, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
#pragma omp simd
  for (int i = 0; i < n; ++i) x[i] = std::exp(x[i] - mx);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i];
  const double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) x[i] *= inv;
}

// Smooth GELU approximation x * sigmoid(1.702 x).
inline double gelu(double x) { return x / (1.0 + std::exp(-1.702 * x)); }

struct LayerNormParams {
  Param* gain = nullptr;
  Param* bias = nullptr;
};

struct AttentionParams {
  Param* wqkv = nullptr;  // d x 3d, fused query/key/value projection
  Param* bqkv = nullptr;  // 1 x 3d
  Param* wo = nullptr;    // d x d
  Param* bo = nullptr;    // 1 x d
};

struct MlpParams {
  Param* w1 = nullptr;  // d x 4d
  Param* b1 = nullptr;
  Param* w2 = nullptr;  // 4d x d
  Param* b2 = nullptr;
};

struct BlockParams {
  LayerNormParams ln1;
  AttentionParams attn;
  LayerNormParams ln2;
  MlpParams mlp;
  int n_heads = 1;
};

struct LayerNormCache {
  Matrix x_hat;
  std::vector<double> inv_std;
};

struct BlockCache {
  LayerNormCache ln1, ln2;
  Matrix ln1_out;
  Matrix qkv;    // rows x 3d
  Matrix probs;  // (batch * heads * n) x n attention weights
  Matrix ctx;    // rows x d, heads re-concatenated, before output projection
  Matrix attn_res;  // x + attention output (input to the MLP half)
  Matrix ln2_out;
  Matrix mlp_pre;  // rows x 4d
  Matrix mlp_sig;  // sigmoid(1.702 * mlp_pre)
  Matrix mlp_act;  // gelu(mlp_pre)
};

constexpr double kLayerNormEps = 1e-5;

inline void layernorm_forward(const LayerNormParams& p, const Matrix& x, Matrix& y,
                              LayerNormCache& c) {
  const int n = x.cols;
  if (!y.same_shape(x)) y = Matrix(x.rows, x.cols);
  if (!c.x_hat.same_shape(x)) c.x_hat = Matrix(x.rows, x.cols);
  c.inv_std.assign(static_cast<std::size_t>(x.rows), 0.0);
  const double* g = p.gain->value.data.data();
  const double* b = p.bias->value.data.data();
  for (int i = 0; i < x.rows; ++i) {
    const double* xr = x.row(i);
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += xr[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    c.inv_std[i] = inv;
    double* xh = c.x_hat.row(i);
    double* yr = y.row(i);
    for (int j = 0; j < n; ++j) {
      xh[j] = (xr[j] - mean) * inv;
      yr[j] = g[j] * xh[j] + b[j];
    }
  }
}

inline void layernorm_backward(const LayerNormParams& p, const Matrix& dy,
                               const LayerNormCache& c, Matrix& dx) {
  const int n = dy.cols;
  if (!dx.same_shape(dy)) dx = Matrix(dy.rows, dy.cols);
  const double* g = p.gain->value.data.data();
  double* dg = p.gain->grad.data.data();
  double* db = p.bias->grad.data.data();
  for (int i = 0; i < dy.rows; ++i) {
    const double* dyr = dy.row(i);
    const double* xh = c.x_hat.row(i);
    double* dxr = dx.row(i);
    double sum_gdy = 0.0, sum_gdy_xh = 0.0;
    for (int j = 0; j < n; ++j) {
      const double gdy = g[j] * dyr[j];
      sum_gdy += gdy;
      sum_gdy_xh += gdy * xh[j];
      dg[j] += dyr[j] * xh[j];
      db[j] += dyr[j];
    }
    const double inv = c.inv_std[i];
    const double m1 = sum_gdy / n;
    const double m2 = sum_gdy_xh / n;
    for (int j = 0; j < n; ++j) dxr[j] = (g[j] * dyr[j] - m1 - xh[j] * m2) * inv;
  }
}

// Multi-head self-attention over full (unmasked) token windows of length n.
// Rows of x are grouped per sample: sample s occupies rows [s*n, (s+1)*n).
inline void attention_forward(const AttentionParams& p, int n_heads, const Matrix& x,
                              int n, Matrix& y, BlockCache& c) {
  const int d = x.cols;
  const int batch = x.rows / n;
  const int hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  matmul(x, p.wqkv->value, c.qkv);
  add_bias(c.qkv, p.bqkv->value);
  if (c.ctx.rows != x.rows || c.ctx.cols != d) c.ctx = Matrix(x.rows, d);
  if (c.probs.rows != batch * n_heads * n || c.probs.cols != n)
    c.probs = Matrix(batch * n_heads * n, n);

  for (int s = 0; s < batch; ++s) {
    for (int h = 0; h < n_heads; ++h) {
      const int qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
      for (int i = 0; i < n; ++i) {
        const double* qi = c.qkv.row(s * n + i) + qo;
        double* prow = c.probs.row((s * n_heads + h) * n + i);
        for (int j = 0; j < n; ++j) {
          const double* kj = c.qkv.row(s * n + j) + ko;
          double dot = 0.0;
          for (int t = 0; t < hd; ++t) dot += qi[t] * kj[t];
          prow[j] = dot * scale;
        }
        softmax_row(prow, n);
        double* out = c.ctx.row(s * n + i) + qo;
        for (int t = 0; t < hd; ++t) out[t] = 0.0;
        for (int j = 0; j < n; ++j) {
          const double* vj = c.qkv.row(s * n + j) + vo;
          const double pij = prow[j];
          for (int t = 0; t < hd; ++t) out[t] += pij * vj[t];
        }
      }
    }
  }
  matmul(c.ctx, p.wo->value, y);
  add_bias(y, p.bo->value);
}

inline void attention_backward(const AttentionParams& p, int n_heads, const Matrix& x,
                               int n, const Matrix& dy, const BlockCache& c, Matrix& dx,
                               Matrix& dctx, Matrix& dqkv) {
  const int d = x.cols;
  const int batch = x.rows / n;
  const int hd = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // output projection
  matmul_tn(c.ctx, dy, p.wo->grad, /*accumulate=*/true);
  bias_grad(dy, p.bo->grad);
  matmul_nt(dy, p.wo->value, dctx);

  if (!dqkv.same_shape(c.qkv)) dqkv = Matrix(c.qkv.rows, c.qkv.cols);
  dqkv.fill(0.0);
  std::vector<double> dp(static_cast<std::size_t>(n));
  for (int s = 0; s < batch; ++s) {
    for (int h = 0; h < n_heads; ++h) {
      const int qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
      for (int i = 0; i < n; ++i) {
        const double* dctx_i = dctx.row(s * n + i) + qo;
        const double* prow = c.probs.row((s * n_heads + h) * n + i);
        // dV and dP
        double dot_pp = 0.0;
        for (int j = 0; j < n; ++j) {
          const double* vj = c.qkv.row(s * n + j) + vo;
          double* dvj = dqkv.row(s * n + j) + vo;
          double e = 0.0;
          for (int t = 0; t < hd; ++t) {
            e += dctx_i[t] * vj[t];
            dvj[t] += prow[j] * dctx_i[t];
          }
          dp[j] = e;
          dot_pp += prow[j] * e;
        }
        // softmax backward, then dQ and dK
        const double* qi = c.qkv.row(s * n + i) + qo;
        double* dqi = dqkv.row(s * n + i) + qo;
        for (int j = 0; j < n; ++j) {
          const double ds = prow[j] * (dp[j] - dot_pp) * scale;
          const double* kj = c.qkv.row(s * n + j) + ko;
          double* dkj = dqkv.row(s * n + j) + ko;
          for (int t = 0; t < hd; ++t) {
            dqi[t] += ds * kj[t];
            dkj[t] += ds * qi[t];
          }
        }
      }
    }
  }
  matmul_tn(x, dqkv, p.wqkv->grad, /*accumulate=*/true);
  bias_grad(dqkv, p.bqkv->grad);
  matmul_nt(dqkv, p.wqkv->value, dx);
}

inline void mlp_forward(const MlpParams& p, const Matrix& x, Matrix& y, BlockCache& c) {
  matmul(x, p.w1->value, c.mlp_pre);
  add_bias(c.mlp_pre, p.b1->value);
  if (!c.mlp_sig.same_shape(c.mlp_pre)) c.mlp_sig = Matrix(c.mlp_pre.rows, c.mlp_pre.cols);
  if (!c.mlp_act.same_shape(c.mlp_pre)) c.mlp_act = Matrix(c.mlp_pre.rows, c.mlp_pre.cols);
  const std::size_t total = c.mlp_pre.size();
  const double* h = c.mlp_pre.data.data();
  double* sg = c.mlp_sig.data.data();
  double* a = c.mlp_act.data.data();
#pragma omp simd
  for (std::size_t i = 0; i < total; ++i) sg[i] = 1.0 / (1.0 + std::exp(-1.702 * h[i]));
  for (std::size_t i = 0; i < total; ++i) a[i] = h[i] * sg[i];
  matmul(c.mlp_act, p.w2->value, y);
  add_bias(y, p.b2->value);
}

inline void mlp_backward(const MlpParams& p, const Matrix& x, const Matrix& dy,
                         const BlockCache& c, Matrix& dx, Matrix& dact, Matrix& dpre) {
  matmul_tn(c.mlp_act, dy, p.w2->grad, /*accumulate=*/true);
  bias_grad(dy, p.b2->grad);
  matmul_nt(dy, p.w2->value, dact);
  if (!dpre.same_shape(dact)) dpre = Matrix(dact.rows, dact.cols);
  const std::size_t total = dact.size();
  const double* h = c.mlp_pre.data.data();
  const double* sg = c.mlp_sig.data.data();
  const double* da = dact.data.data();
  double* dh = dpre.data.data();
  for (std::size_t i = 0; i < total; ++i) {
    const double s = sg[i];
    dh[i] = da[i] * (s + 1.702 * h[i] * s * (1.0 - s));
  }
  matmul_tn(x, dpre, p.w1->grad, /*accumulate=*/true);
  bias_grad(dpre, p.b1->grad);
  matmul_nt(dpre, p.w1->value, dx);
}

// y = block(x): pre-norm attention with residual, then pre-norm MLP with
// residual. n is the per-sample token count; x.rows must be a multiple.
inline void block_forward(const BlockParams& p, const Matrix& x, int n, Matrix& y,
                          BlockCache& c) {
  if (x.rows % n != 0) throw ArgumentError("block_forward: rows not a multiple of n");
  if (p.attn.wqkv == nullptr) throw ConfigError("block parameters not bound");
  layernorm_forward(p.ln1, x, c.ln1_out, c.ln1);
  Matrix attn_out;
  attention_forward(p.attn, p.n_heads, c.ln1_out, n, attn_out, c);
  if (!c.attn_res.same_shape(x)) c.attn_res = Matrix(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i)
    c.attn_res.data[i] = x.data[i] + attn_out.data[i];
  layernorm_forward(p.ln2, c.attn_res, c.ln2_out, c.ln2);
  Matrix mlp_out;
  mlp_forward(p.mlp, c.ln2_out, mlp_out, c);
  if (!y.same_shape(x)) y = Matrix(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i)
    y.data[i] = c.attn_res.data[i] + mlp_out.data[i];
}

// dx = d block / dx given dy, accumulating parameter gradients.
inline void block_backward(const BlockParams& p, const Matrix& x, int n, const Matrix& dy,
                           BlockCache& c, Matrix& dx) {
  Matrix d_ln2out, dact, dpre, d_res, d_ln1out, dctx, dqkv, dx_attn;
  mlp_backward(p.mlp, c.ln2_out, dy, c, d_ln2out, dact, dpre);
  layernorm_backward(p.ln2, d_ln2out, c.ln2, d_res);
  // residual: gradient into attn_res is dy + d_res
  for (std::size_t i = 0; i < d_res.size(); ++i) d_res.data[i] += dy.data[i];
  attention_backward(p.attn, p.n_heads, c.ln1_out, n, d_res, c, d_ln1out, dctx, dqkv);
  layernorm_backward(p.ln1, d_ln1out, c.ln1, dx_attn);
  if (!dx.same_shape(x)) dx = Matrix(x.rows, x.cols);
  for (std::size_t i = 0; i < dx.size(); ++i)
    dx.data[i] = d_res.data[i] + dx_attn.data[i];
}

}  // namespace prolat
