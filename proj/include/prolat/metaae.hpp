#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "prolat/codec.hpp"
#include "prolat/dataset.hpp"
#include "prolat/grad_check.hpp"
#include "prolat/repr.hpp"
#include "prolat/transformer.hpp"

namespace prolat {

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct MetaAEConfig {
  int n_tokens = 16;  // N_z == N_r
  int d_latent = 32;  // d_z
  int d_model = 32;   // d_m
  int n_layers_enc = 2;
  int n_layers_dec = 2;
  int n_heads = 4;
  int k_levels = 4;
  double lambda_err = 1.0;
  double lr = 1e-3;
  int batch_size = 64;
  int epochs = 96;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_tokens < 1 || d_latent < 1 || d_model < 1)
      throw ConfigError("MetaAEConfig: shapes must be positive");
    if (n_heads < 1 || d_model % n_heads != 0)
      throw ConfigError("MetaAEConfig: head count must divide d_model");
    if (k_levels < 1 || k_levels > n_tokens)
      throw ConfigError("MetaAEConfig: need 1 <= K <= n_tokens");
    if (lambda_err < 0) throw ConfigError("MetaAEConfig: lambda_err must be >= 0");
    if (n_layers_enc < 1 || n_layers_dec < 1)
      throw ConfigError("MetaAEConfig: need at least one layer per side");
    if (batch_size < 1 || epochs < 0) throw ConfigError("MetaAEConfig: bad schedule");
  }
};

struct LossReport {
  double l_rec = 0.0;
  double l_err = 0.0;
  double l_total = 0.0;
  std::vector<int> levels;      // sampled transmission level per sample
  std::vector<double> e_true;   // per-sample reconstruction error (detached)
  std::vector<double> e_pred;   // per-sample error-head output
};

struct TrainReport {
  std::vector<double> epoch_loss;
  long steps = 0;
};

// The trainable progressive codec: a Transformer encoder producing ordered
// tokens, prefix masking during training, and a Transformer decoder that
// reconstructs the full latent while predicting its own error from a
// prepended error token.
class MetaAE : public Codec {
 public:
  explicit MetaAE(const MetaAEConfig& cfg, bool init_weights = true) : cfg_(cfg) {
    cfg_.validate();
    boundaries_ = make_boundaries(cfg_.n_tokens, cfg_.k_levels);
    build_params_();
    if (init_weights) init_params_();
  }

  const MetaAEConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // ---- codec surface ----

  OrderedRepr encode(const Matrix& z) const override {
    if (z.rows != cfg_.n_tokens || z.cols != cfg_.d_latent)
      throw ArgumentError("MetaAE::encode: latent shape mismatch");
    std::vector<BlockCache> caches(static_cast<std::size_t>(cfg_.n_layers_enc));
    Matrix x;
    OrderedRepr r;
    r.tokens = encoder_forward_(z, caches, x);
    r.boundaries = boundaries_;
    return r;
  }

  DecodeResult decode(const Matrix& masked, int level) const override {
    if (level < 1 || level > cfg_.k_levels)
      throw ArgumentError("MetaAE::decode: level out of range");
    if (masked.rows != cfg_.n_tokens || masked.cols != cfg_.d_model)
      throw ArgumentError("MetaAE::decode: masked shape mismatch");
    std::vector<BlockCache> caches(static_cast<std::size_t>(cfg_.n_layers_dec));
    LayerNormCache lnf_cache;
    Matrix dec_in, hidden;
    decoder_forward_(masked, 1, caches, lnf_cache, dec_in, hidden);
    DecodeResult out;
    out.z_hat = Matrix(cfg_.n_tokens, cfg_.d_latent);
    Matrix hz(cfg_.n_tokens, cfg_.d_model);
    for (int t = 0; t < cfg_.n_tokens; ++t)
      std::copy(hidden.row(t + 1), hidden.row(t + 1) + cfg_.d_model, hz.row(t));
    matmul(hz, recon_w_->value, out.z_hat);
    add_bias(out.z_hat, recon_b_->value);
    double u = errhead_b_->value.at(0, 0);
    for (int j = 0; j < cfg_.d_model; ++j)
      u += hidden.at(0, j) * errhead_w_->value.at(j, 0);
    out.e_hat = softplus(u);
    out.q = quality_from_error(out.e_hat);
    return out;
  }

  int levels() const override { return cfg_.k_levels; }
  const std::vector<int>& boundaries() const override { return boundaries_; }
  int token_count() const override { return cfg_.n_tokens; }
  int token_dim() const override { return cfg_.d_model; }
  int latent_dim() const override { return cfg_.d_latent; }
  std::string kind() const override { return "metaae"; }

  // ---- training ----

  // Forward (and optionally backward) pass over a batch with fixed levels.
  // Error-head regression targets are the current per-sample reconstruction
  // errors, detached from the graph (stop-gradient); passing frozen_targets
  // overrides them, which is what the finite-difference oracle needs to
  // probe the stop-gradient semantics.
  LossReport batch_loss(const std::vector<const Matrix*>& batch,
                        const std::vector<int>& levels,
                        const std::vector<double>* frozen_targets, bool with_grads) {
    const int b = static_cast<int>(batch.size());
    if (b == 0) throw ArgumentError("batch_loss: empty batch");
    if (levels.size() != batch.size())
      throw ArgumentError("batch_loss: levels size mismatch");
    for (int lvl : levels)
      if (lvl < 1 || lvl > cfg_.k_levels) throw ArgumentError("batch_loss: level out of range");
    const int n = cfg_.n_tokens, dm = cfg_.d_model, dz = cfg_.d_latent;

    // stack inputs
    Matrix& z_in = ws_.z_in;
    if (z_in.rows != b * n || z_in.cols != dz) z_in = Matrix(b * n, dz);
    for (int s = 0; s < b; ++s) {
      const Matrix& zs = *batch[static_cast<std::size_t>(s)];
      if (zs.rows != n || zs.cols != dz)
        throw ArgumentError("batch_loss: sample shape mismatch");
      std::copy(zs.data.begin(), zs.data.end(), z_in.row(s * n));
    }

    // encoder
    ws_.enc_caches.resize(static_cast<std::size_t>(cfg_.n_layers_enc));
    Matrix& x0 = ws_.enc_in;
    matmul(z_in, enc_in_w_->value, x0);
    add_bias(x0, enc_in_b_->value);
    for (int s = 0; s < b; ++s)
      for (int t = 0; t < n; ++t) {
        double* r = x0.row(s * n + t);
        const double* p = enc_pos_->value.row(t);
        for (int j = 0; j < dm; ++j) r[j] += p[j];
      }
    ws_.enc_x.resize(static_cast<std::size_t>(cfg_.n_layers_enc) + 1);
    ws_.enc_x[0] = x0;
    for (int l = 0; l < cfg_.n_layers_enc; ++l)
      block_forward(enc_blocks_[static_cast<std::size_t>(l)], ws_.enc_x[static_cast<std::size_t>(l)], n,
                    ws_.enc_x[static_cast<std::size_t>(l) + 1], ws_.enc_caches[static_cast<std::size_t>(l)]);
    const Matrix& repr = ws_.enc_x[static_cast<std::size_t>(cfg_.n_layers_enc)];

    // prefix mask per sample
    Matrix& masked = ws_.masked;
    masked = repr;
    for (int s = 0; s < b; ++s) {
      const int keep = boundaries_[static_cast<std::size_t>(levels[static_cast<std::size_t>(s)] - 1)];
      for (int t = keep; t < n; ++t) {
        double* r = masked.row(s * n + t);
        for (int j = 0; j < dm; ++j) r[j] = 0.0;
      }
    }

    // decoder
    ws_.dec_caches.resize(static_cast<std::size_t>(cfg_.n_layers_dec));
    Matrix& d0 = ws_.dec_in;
    decoder_assemble_(masked, b, d0);
    ws_.dec_x.resize(static_cast<std::size_t>(cfg_.n_layers_dec) + 1);
    ws_.dec_x[0] = d0;
    for (int l = 0; l < cfg_.n_layers_dec; ++l)
      block_forward(dec_blocks_[static_cast<std::size_t>(l)], ws_.dec_x[static_cast<std::size_t>(l)], n + 1,
                    ws_.dec_x[static_cast<std::size_t>(l) + 1], ws_.dec_caches[static_cast<std::size_t>(l)]);
    Matrix& hidden = ws_.hidden;
    layernorm_forward(lnf_, ws_.dec_x[static_cast<std::size_t>(cfg_.n_layers_dec)], hidden, ws_.lnf_cache);

    // heads
    Matrix& hz = ws_.hz;
    if (hz.rows != b * n || hz.cols != dm) hz = Matrix(b * n, dm);
    for (int s = 0; s < b; ++s)
      for (int t = 0; t < n; ++t)
        std::copy(hidden.row(s * (n + 1) + 1 + t), hidden.row(s * (n + 1) + 1 + t) + dm,
                  hz.row(s * n + t));
    Matrix& z_hat = ws_.z_hat;
    matmul(hz, recon_w_->value, z_hat);
    add_bias(z_hat, recon_b_->value);

    LossReport rep;
    rep.levels = levels;
    rep.e_true.resize(static_cast<std::size_t>(b));
    rep.e_pred.resize(static_cast<std::size_t>(b));
    std::vector<double>& u = ws_.err_pre;
    u.assign(static_cast<std::size_t>(b), 0.0);
    for (int s = 0; s < b; ++s) {
      double acc = errhead_b_->value.at(0, 0);
      const double* h = hidden.row(s * (n + 1));
      for (int j = 0; j < dm; ++j) acc += h[j] * errhead_w_->value.at(j, 0);
      u[static_cast<std::size_t>(s)] = acc;
      rep.e_pred[static_cast<std::size_t>(s)] = softplus(acc);
    }

    const double inv_entries = 1.0 / static_cast<double>(static_cast<std::size_t>(n) * dz);
    for (int s = 0; s < b; ++s) {
      double acc = 0.0;
      const double* zh = z_hat.row(s * n);
      const double* zz = z_in.row(s * n);
      for (std::size_t i = 0; i < static_cast<std::size_t>(n) * dz; ++i) {
        const double diff = zh[i] - zz[i];
        acc += diff * diff;
      }
      rep.e_true[static_cast<std::size_t>(s)] = acc * inv_entries;
    }
    double l_rec = 0.0, l_err = 0.0;
    for (int s = 0; s < b; ++s) {
      l_rec += rep.e_true[static_cast<std::size_t>(s)];
      const double target = frozen_targets
                                ? (*frozen_targets)[static_cast<std::size_t>(s)]
                                : rep.e_true[static_cast<std::size_t>(s)];
      const double diff = rep.e_pred[static_cast<std::size_t>(s)] - target;
      l_err += diff * diff;
    }
    rep.l_rec = l_rec / b;
    rep.l_err = l_err / b;
    rep.l_total = rep.l_rec + cfg_.lambda_err * rep.l_err;
    if (!std::isfinite(rep.l_total))
      throw TrainingError("non-finite loss (seed " + std::to_string(cfg_.seed) + ", step " +
                          std::to_string(store_.step()) + ")");
    if (!with_grads) return rep;

    // ---- backward ----
    // dL/dz_hat from L_rec only: the error target is stop-gradient detached.
    Matrix& dz_hat = ws_.dz_hat;
    if (!dz_hat.same_shape(z_hat)) dz_hat = Matrix(z_hat.rows, z_hat.cols);
    const double rec_coef = 2.0 * inv_entries / b;
    for (std::size_t i = 0; i < z_hat.size(); ++i)
      dz_hat.data[i] = rec_coef * (z_hat.data[i] - z_in.data[i]);

    // heads backward
    Matrix& dhidden = ws_.dhidden;
    if (!dhidden.same_shape(hidden)) dhidden = Matrix(hidden.rows, hidden.cols);
    dhidden.fill(0.0);
    matmul_tn(hz, dz_hat, recon_w_->grad, true);
    bias_grad(dz_hat, recon_b_->grad);
    Matrix& dhz = ws_.dhz;
    matmul_nt(dz_hat, recon_w_->value, dhz);
    for (int s = 0; s < b; ++s)
      for (int t = 0; t < n; ++t)
        std::copy(dhz.row(s * n + t), dhz.row(s * n + t) + dm,
                  dhidden.row(s * (n + 1) + 1 + t));
    for (int s = 0; s < b; ++s) {
      const double target = frozen_targets
                                ? (*frozen_targets)[static_cast<std::size_t>(s)]
                                : rep.e_true[static_cast<std::size_t>(s)];
      const double de = cfg_.lambda_err * 2.0 *
                        (rep.e_pred[static_cast<std::size_t>(s)] - target) / b;
      const double du = de * sigmoid(u[static_cast<std::size_t>(s)]);
      const double* h = hidden.row(s * (n + 1));
      double* dh = dhidden.row(s * (n + 1));
      for (int j = 0; j < dm; ++j) {
        errhead_w_->grad.at(j, 0) += du * h[j];
        dh[j] += du * errhead_w_->value.at(j, 0);
      }
      errhead_b_->grad.at(0, 0) += du;
    }

    // decoder backward
    Matrix& ddec = ws_.ddec;
    layernorm_backward(lnf_, dhidden, ws_.lnf_cache, ddec);
    Matrix& ddec_prev = ws_.ddec_prev;
    for (int l = cfg_.n_layers_dec - 1; l >= 0; --l) {
      block_backward(dec_blocks_[static_cast<std::size_t>(l)], ws_.dec_x[static_cast<std::size_t>(l)],
                     n + 1, ddec, ws_.dec_caches[static_cast<std::size_t>(l)], ddec_prev);
      std::swap(ddec, ddec_prev);
    }
    // split decoder-input gradient: error token, positions, masked tokens
    Matrix& dmasked = ws_.dmasked;
    if (dmasked.rows != b * n || dmasked.cols != dm) dmasked = Matrix(b * n, dm);
    for (int s = 0; s < b; ++s) {
      const double* drow = ddec.row(s * (n + 1));
      for (int j = 0; j < dm; ++j) {
        err_token_->grad.at(0, j) += drow[j];
        dec_pos_->grad.at(0, j) += drow[j];
      }
      for (int t = 0; t < n; ++t) {
        const double* dr = ddec.row(s * (n + 1) + 1 + t);
        double* dp = dec_pos_->grad.row(1 + t);
        double* dmr = dmasked.row(s * n + t);
        for (int j = 0; j < dm; ++j) {
          dp[j] += dr[j];
          dmr[j] = dr[j];
        }
      }
    }
    // mask backward: rows beyond the sampled boundary carry no gradient
    for (int s = 0; s < b; ++s) {
      const int keep = boundaries_[static_cast<std::size_t>(levels[static_cast<std::size_t>(s)] - 1)];
      for (int t = keep; t < n; ++t) {
        double* r = dmasked.row(s * n + t);
        for (int j = 0; j < dm; ++j) r[j] = 0.0;
      }
    }

    // encoder backward
    Matrix& denc = ws_.denc;
    denc = dmasked;
    Matrix& denc_prev = ws_.denc_prev;
    for (int l = cfg_.n_layers_enc - 1; l >= 0; --l) {
      block_backward(enc_blocks_[static_cast<std::size_t>(l)], ws_.enc_x[static_cast<std::size_t>(l)],
                     n, denc, ws_.enc_caches[static_cast<std::size_t>(l)], denc_prev);
      std::swap(denc, denc_prev);
    }
    for (int s = 0; s < b; ++s)
      for (int t = 0; t < n; ++t) {
        const double* dr = denc.row(s * n + t);
        double* dp = enc_pos_->grad.row(t);
        for (int j = 0; j < dm; ++j) dp[j] += dr[j];
      }
    matmul_tn(z_in, denc, enc_in_w_->grad, true);
    bias_grad(denc, enc_in_b_->grad);
    return rep;
  }

  // One optimizer step: sample a level per sample uniformly on {1..K},
  // forward, backward, Adam update.
  LossReport train_step(const std::vector<const Matrix*>& batch, Rng& rng) {
    std::vector<int> levels(batch.size());
    for (auto& l : levels)
      l = static_cast<int>(rng.uniform_int(1, static_cast<std::uint64_t>(cfg_.k_levels)));
    store_.zero_grad();
    LossReport rep = batch_loss(batch, levels, nullptr, true);
    store_.adam_step({cfg_.lr, 0.9, 0.999, 1e-8});
    return rep;
  }

  // Full training schedule over the train split (epochs * floor(n/batch)
  // steps, deterministic shuffling). Returns the per-epoch mean total loss.
  TrainReport train(const std::vector<const Matrix*>& train_set,
                    const std::function<void(int, double)>& on_epoch = {}) {
    if (train_set.size() < static_cast<std::size_t>(cfg_.batch_size))
      throw ConfigError("train: fewer samples than one batch");
    Rng rng(cfg_.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    TrainReport report;
    const std::size_t steps_per_epoch = train_set.size() / static_cast<std::size_t>(cfg_.batch_size);
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      rng.shuffle(order);
      double epoch_loss = 0.0;
      for (std::size_t step = 0; step < steps_per_epoch; ++step) {
        std::vector<const Matrix*> batch(static_cast<std::size_t>(cfg_.batch_size));
        for (int i = 0; i < cfg_.batch_size; ++i)
          batch[static_cast<std::size_t>(i)] =
              train_set[order[step * static_cast<std::size_t>(cfg_.batch_size) +
                              static_cast<std::size_t>(i)]];
        epoch_loss += train_step(batch, rng).l_total;
        ++report.steps;
      }
      epoch_loss /= static_cast<double>(steps_per_epoch);
      report.epoch_loss.push_back(epoch_loss);
      if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return report;
  }

  // ---- persistence ----
  // File: magic "PMA1", seven u32 config fields, f64 lambda_err, K u32
  // boundaries, then the PSC1 parameter blob.
  std::string serialize() const override {
    std::string out = "PMA1";
    put_u32(out, static_cast<std::uint32_t>(cfg_.n_tokens));
    put_u32(out, static_cast<std::uint32_t>(cfg_.d_latent));
    put_u32(out, static_cast<std::uint32_t>(cfg_.d_model));
    put_u32(out, static_cast<std::uint32_t>(cfg_.n_layers_enc));
    put_u32(out, static_cast<std::uint32_t>(cfg_.n_layers_dec));
    put_u32(out, static_cast<std::uint32_t>(cfg_.n_heads));
    put_u32(out, static_cast<std::uint32_t>(cfg_.k_levels));
    put_f64(out, cfg_.lambda_err);
    for (int b : boundaries_) put_u32(out, static_cast<std::uint32_t>(b));
    out += store_.serialize();
    return out;
  }

  static MetaAE deserialize(const std::string& bytes) {
    ByteReader r(bytes, "PMA1 checkpoint");
    if (r.bytes(4) != "PMA1") throw SerializationError("bad MetaAE magic");
    MetaAEConfig cfg;
    cfg.n_tokens = static_cast<int>(r.u32());
    cfg.d_latent = static_cast<int>(r.u32());
    cfg.d_model = static_cast<int>(r.u32());
    cfg.n_layers_enc = static_cast<int>(r.u32());
    cfg.n_layers_dec = static_cast<int>(r.u32());
    cfg.n_heads = static_cast<int>(r.u32());
    cfg.k_levels = static_cast<int>(r.u32());
    cfg.lambda_err = r.f64();
    std::vector<int> bounds(static_cast<std::size_t>(cfg.k_levels));
    for (auto& b : bounds) b = static_cast<int>(r.u32());
    MetaAE model(cfg, /*init_weights=*/false);
    if (bounds != model.boundaries_)
      throw SerializationError("MetaAE checkpoint boundaries mismatch");
    model.store_.deserialize(r.bytes(r.remaining()));
    return model;
  }

 private:
  struct Workspace {
    std::vector<BlockCache> enc_caches, dec_caches;
    std::vector<Matrix> enc_x, dec_x;
    Matrix z_in, enc_in, masked, dec_in, hidden, hz, z_hat;
    LayerNormCache lnf_cache;
    Matrix dz_hat, dhidden, dhz, ddec, ddec_prev, dmasked, denc, denc_prev;
    std::vector<double> err_pre;
  };

  void build_params_() {
    const int dm = cfg_.d_model, dz = cfg_.d_latent, n = cfg_.n_tokens;
    enc_in_w_ = &store_.add("enc.in.w", dz, dm);
    enc_in_b_ = &store_.add("enc.in.b", 1, dm);
    enc_pos_ = &store_.add("enc.pos", n, dm);
    err_token_ = &store_.add("dec.err_token", 1, dm);
    dec_pos_ = &store_.add("dec.pos", n + 1, dm);
    recon_w_ = &store_.add("dec.recon.w", dm, dz);
    recon_b_ = &store_.add("dec.recon.b", 1, dz);
    errhead_w_ = &store_.add("dec.errhead.w", dm, 1);
    errhead_b_ = &store_.add("dec.errhead.b", 1, 1);
    lnf_.gain = &store_.add("dec.ln_f.g", 1, dm);
    lnf_.bias = &store_.add("dec.ln_f.b", 1, dm);
    enc_blocks_.resize(static_cast<std::size_t>(cfg_.n_layers_enc));
    dec_blocks_.resize(static_cast<std::size_t>(cfg_.n_layers_dec));
    for (int l = 0; l < cfg_.n_layers_enc; ++l)
      bind_block_(enc_blocks_[static_cast<std::size_t>(l)], "enc.blk" + std::to_string(l));
    for (int l = 0; l < cfg_.n_layers_dec; ++l)
      bind_block_(dec_blocks_[static_cast<std::size_t>(l)], "dec.blk" + std::to_string(l));
  }

  void bind_block_(BlockParams& blk, const std::string& prefix) {
    const int dm = cfg_.d_model;
    blk.n_heads = cfg_.n_heads;
    blk.ln1.gain = &store_.add(prefix + ".ln1.g", 1, dm);
    blk.ln1.bias = &store_.add(prefix + ".ln1.b", 1, dm);
    blk.attn.wqkv = &store_.add(prefix + ".attn.wqkv", dm, 3 * dm);
    blk.attn.bqkv = &store_.add(prefix + ".attn.bqkv", 1, 3 * dm);
    blk.attn.wo = &store_.add(prefix + ".attn.wo", dm, dm);
    blk.attn.bo = &store_.add(prefix + ".attn.bo", 1, dm);
    blk.ln2.gain = &store_.add(prefix + ".ln2.g", 1, dm);
    blk.ln2.bias = &store_.add(prefix + ".ln2.b", 1, dm);
    blk.mlp.w1 = &store_.add(prefix + ".mlp.w1", dm, 4 * dm);
    blk.mlp.b1 = &store_.add(prefix + ".mlp.b1", 1, 4 * dm);
    blk.mlp.w2 = &store_.add(prefix + ".mlp.w2", 4 * dm, dm);
    blk.mlp.b2 = &store_.add(prefix + ".mlp.b2", 1, dm);
  }

  // Scaled-uniform-by-fan-in weights, unit gains, zero biases. The fan-in
  // of a weight matrix is its row count (inputs enter as x @ W).
  void init_params_() {
    Rng rng(cfg_.seed);
    for (auto& [name, p] : store_.all()) {
      const std::string leaf = name.substr(name.rfind('.') + 1);
      if (leaf == "g") {
        p.value.fill(1.0);
      } else if (leaf[0] == 'b') {
        p.value.fill(0.0);
      } else if (leaf == "pos" || leaf == "err_token") {
        const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
        for (double& v : p.value.data) v = rng.uniform(-s, s);
      } else {
        const double s = 1.0 / std::sqrt(static_cast<double>(p.value.rows));
        for (double& v : p.value.data) v = rng.uniform(-s, s);
      }
    }
  }

  // Single-sample encoder used by the const encode(); training uses the
  // batched path in batch_loss.
  Matrix encoder_forward_(const Matrix& z, std::vector<BlockCache>& caches, Matrix& x) const {
    Matrix cur;
    matmul(z, enc_in_w_->value, cur);
    add_bias(cur, enc_in_b_->value);
    for (int t = 0; t < cfg_.n_tokens; ++t) {
      double* r = cur.row(t);
      const double* p = enc_pos_->value.row(t);
      for (int j = 0; j < cfg_.d_model; ++j) r[j] += p[j];
    }
    Matrix next;
    for (int l = 0; l < cfg_.n_layers_enc; ++l) {
      block_forward(enc_blocks_[static_cast<std::size_t>(l)], cur, cfg_.n_tokens, next,
                    caches[static_cast<std::size_t>(l)]);
      std::swap(cur, next);
    }
    x = cur;
    return cur;
  }

  void decoder_assemble_(const Matrix& masked, int batch, Matrix& dec_in) const {
    const int n = cfg_.n_tokens, dm = cfg_.d_model;
    if (dec_in.rows != batch * (n + 1) || dec_in.cols != dm)
      dec_in = Matrix(batch * (n + 1), dm);
    for (int s = 0; s < batch; ++s) {
      double* r0 = dec_in.row(s * (n + 1));
      for (int j = 0; j < dm; ++j)
        r0[j] = err_token_->value.at(0, j) + dec_pos_->value.at(0, j);
      for (int t = 0; t < n; ++t) {
        double* r = dec_in.row(s * (n + 1) + 1 + t);
        const double* src = masked.row(s * n + t);
        const double* p = dec_pos_->value.row(1 + t);
        for (int j = 0; j < dm; ++j) r[j] = src[j] + p[j];
      }
    }
  }

  void decoder_forward_(const Matrix& masked, int batch, std::vector<BlockCache>& caches,
                        LayerNormCache& lnf_cache, Matrix& dec_in, Matrix& hidden) const {
    decoder_assemble_(masked, batch, dec_in);
    Matrix cur = dec_in, next;
    for (int l = 0; l < cfg_.n_layers_dec; ++l) {
      block_forward(dec_blocks_[static_cast<std::size_t>(l)], cur, cfg_.n_tokens + 1, next,
                    caches[static_cast<std::size_t>(l)]);
      std::swap(cur, next);
    }
    layernorm_forward(lnf_, cur, hidden, lnf_cache);
  }

  MetaAEConfig cfg_;
  std::vector<int> boundaries_;
  ParamStore store_;
  Param* enc_in_w_ = nullptr;
  Param* enc_in_b_ = nullptr;
  Param* enc_pos_ = nullptr;
  Param* err_token_ = nullptr;
  Param* dec_pos_ = nullptr;
  Param* recon_w_ = nullptr;
  Param* recon_b_ = nullptr;
  Param* errhead_w_ = nullptr;
  Param* errhead_b_ = nullptr;
  LayerNormParams lnf_;
  std::vector<BlockParams> enc_blocks_;
  std::vector<BlockParams> dec_blocks_;
  Workspace ws_;
};

}  // namespace prolat
