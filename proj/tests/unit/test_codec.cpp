#include <catch2/catch_amalgamated.hpp>

#include "prolat/codec_io.hpp"
#include "prolat/dataset.hpp"
#include "prolat/grad_check.hpp"
#include "prolat/linear_codec.hpp"
#include "prolat/metaae.hpp"
#include "support/jacobi.hpp"

using namespace prolat;

namespace {

Dataset random_dataset(int n_samples, int n_tokens, int d, std::uint64_t seed,
                       int rank = 0, double noise = 0.0) {
  SyntheticSpec spec;
  spec.n_samples = n_samples;
  spec.n_tokens = n_tokens;
  spec.d_latent = d;
  spec.rank = rank > 0 ? rank : d;
  spec.noise_std = noise;
  spec.seed = seed;
  return gen_synthetic(spec);
}

Matrix token_covariance(const Dataset& data, Matrix& mean_out) {
  const int d = data.d_latent;
  const std::size_t m = static_cast<std::size_t>(data.count()) * data.n_tokens;
  mean_out = Matrix(1, d);
  for (const auto& s : data.samples)
    for (int t = 0; t < s.rows; ++t)
      for (int j = 0; j < d; ++j) mean_out.at(0, j) += s.at(t, j);
  for (double& v : mean_out.data) v /= static_cast<double>(m);
  Matrix cov(d, d);
  for (const auto& s : data.samples)
    for (int t = 0; t < s.rows; ++t)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          cov.at(i, j) += (s.at(t, i) - mean_out.at(0, i)) * (s.at(t, j) - mean_out.at(0, j));
  for (double& v : cov.data) v /= static_cast<double>(m);
  return cov;
}

MetaAEConfig tiny_config() {
  MetaAEConfig cfg;
  cfg.n_tokens = 6;
  cfg.d_latent = 8;
  cfg.d_model = 8;
  cfg.n_layers_enc = 1;
  cfg.n_layers_dec = 1;
  cfg.n_heads = 2;
  cfg.k_levels = 3;
  cfg.seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("true_error matches an elementwise re-computation") {
  SECTION("identical inputs give zero") {
    Matrix z(3, 3);
    z.fill(4.0);
    CHECK(true_error(z, z) == 0.0);
  }
  SECTION("uniform offset of one gives one") {
    Rng rng(2);
    Matrix z = random_gaussian(5, 4, rng);
    Matrix zh = z;
    for (double& v : zh.data) v += 1.0;
    CHECK(true_error(zh, z) == Catch::Approx(1.0).epsilon(1e-12));
  }
  SECTION("random 3x3 against a brute-force loop") {
    Rng rng(3);
    Matrix a = random_gaussian(3, 3, rng), b = random_gaussian(3, 3, rng);
    double acc = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) acc += (a.at(i, j) - b.at(i, j)) * (a.at(i, j) - b.at(i, j));
    CHECK(true_error(a, b) == Catch::Approx(acc / 9.0).epsilon(1e-14));
  }
  SECTION("shape mismatch throws") {
    CHECK_THROWS_AS(true_error(Matrix(2, 2), Matrix(2, 3)), ArgumentError);
  }
}

TEST_CASE("quality is exp of negative predicted error") {
  CHECK(quality_from_error(std::log(2.0)) == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(quality_from_error(0.0) == 1.0);
}

TEST_CASE("linear oracle matches a direct eigendecomposition on a 5x5 case") {
  Dataset data = random_dataset(40, 5, 5, 101);
  LinearOrthoCodec codec = fit_linear_oracle(data, 55, /*k_levels=*/5);

  Matrix mean;
  Matrix cov = token_covariance(data, mean);
  auto eig = testsupport::jacobi_eigen(cov);

  for (int j = 0; j < 5; ++j)
    CHECK(codec.eigenvalues()[static_cast<std::size_t>(j)] ==
          Catch::Approx(eig.values[static_cast<std::size_t>(j)]).margin(1e-8));

  // directions agree up to sign
  for (int j = 0; j < 5; ++j) {
    double dot = 0.0;
    for (int i = 0; i < 5; ++i) dot += codec.basis().at(i, j) * eig.vectors.at(i, j);
    CHECK(std::fabs(dot) == Catch::Approx(1.0).margin(1e-7));
  }

  // chunk 1 of the representation carries the top-variance direction's
  // coefficients for every token
  const Matrix& z = data.samples[0];
  OrderedRepr r = codec.encode(z);
  for (int t = 0; t < 5; ++t) {
    double proj = 0.0;
    for (int i = 0; i < 5; ++i) proj += (z.at(t, i) - mean.at(0, i)) * eig.vectors.at(i, 0);
    double stored = r.tokens.data[static_cast<std::size_t>(t)];
    CHECK(std::fabs(std::fabs(stored) - std::fabs(proj)) < 1e-8);
  }
}

TEST_CASE("rank-2 data leaves no variance beyond the second direction") {
  Dataset data = random_dataset(64, 8, 8, 202, /*rank=*/2, /*noise=*/0.0);
  LinearOrthoCodec codec = fit_linear_oracle(data, 7, 4);
  for (int j = 2; j < 8; ++j)
    CHECK(codec.eigenvalues()[static_cast<std::size_t>(j)] < 1e-9);
}

TEST_CASE("isotropic data still yields an orthonormal basis") {
  // zero-mean unit-covariance tokens: any orthonormal basis is valid
  Dataset data = random_dataset(200, 4, 6, 303);
  LinearOrthoCodec codec = fit_linear_oracle(data, 7, 3);
  const Matrix& b = codec.basis();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 6; ++k) dot += b.at(k, i) * b.at(k, j);
      CHECK(dot == Catch::Approx(i == j ? 1.0 : 0.0).margin(1e-8));
    }
  // and variance ordering is non-increasing
  for (std::size_t j = 1; j < codec.eigenvalues().size(); ++j)
    CHECK(codec.eigenvalues()[j] <= codec.eigenvalues()[j - 1] + 1e-12);
}

TEST_CASE("oracle reconstruction error equals trailing eigenvalue mass") {
  Dataset data = random_dataset(128, 16, 32, 404, /*rank=*/12, /*noise=*/0.05);
  const int k = 4;
  LinearOrthoCodec codec = fit_linear_oracle(data, 9, k);

  // level boundary l covers the top 8*l directions (16 tokens * 32 dims, K=4)
  for (int l = 1; l <= k; ++l) {
    double mean_err = 0.0;
    for (const auto& z : data.samples) mean_err += codec.sample_error(z, l);
    mean_err /= data.count();

    const int cut = codec.boundaries()[static_cast<std::size_t>(l - 1)] * 32 / 16;
    double trailing = 0.0;
    for (int j = cut; j < 32; ++j) trailing += codec.eigenvalues()[static_cast<std::size_t>(j)];
    CHECK(mean_err == Catch::Approx(trailing / 32.0).margin(1e-8));
  }
}

TEST_CASE("oracle mean error is non-increasing in the level on any dataset") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Dataset data = random_dataset(96, 12, 16, seed, /*rank=*/6, /*noise=*/0.1);
    LinearOrthoCodec codec = fit_linear_oracle(data, seed + 1, 5);
    std::vector<double> mean_err(5, 0.0);
    for (const auto& z : data.samples)
      for (int l = 1; l <= 5; ++l) mean_err[static_cast<std::size_t>(l - 1)] += codec.sample_error(z, l);
    for (int l = 1; l < 5; ++l)
      CHECK(mean_err[static_cast<std::size_t>(l)] <= mean_err[static_cast<std::size_t>(l - 1)] + 1e-10);
  }
}

TEST_CASE("oracle decode at full level reconstructs exactly") {
  Dataset data = random_dataset(48, 6, 6, 505);
  LinearOrthoCodec codec = fit_linear_oracle(data, 3, 3);
  const Matrix& z = data.samples[7];
  OrderedRepr r = codec.encode(z);
  DecodeResult res = codec.decode(prefix_mask(r, 3), 3);
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(res.z_hat.data[i] == Catch::Approx(z.data[i]).margin(1e-9));
  CHECK(res.e_hat == Catch::Approx(0.0).margin(1e-12));
  CHECK(res.q == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("zero latent with a zero mean encodes to zero") {
  // hand-assembled codec: zero mean, identity basis, 2 tokens x 2 dims, K=2
  std::string bytes = "PLO1";
  put_u32(bytes, 2);  // n_tokens
  put_u32(bytes, 2);  // d_latent
  put_u32(bytes, 2);  // k_levels
  put_u32(bytes, 1);
  put_u32(bytes, 2);  // boundaries [1, 2]
  put_f64(bytes, 0.0);
  put_f64(bytes, 0.0);  // mean
  for (double v : {1.0, 0.0, 0.0, 1.0}) put_f64(bytes, v);  // basis = I
  put_f64(bytes, 1.0);
  put_f64(bytes, 0.5);  // eigenvalues
  put_f64(bytes, 0.25);
  put_f64(bytes, 0.0);  // level mean errors
  LinearOrthoCodec codec = LinearOrthoCodec::deserialize(bytes);

  Matrix zero(2, 2);
  OrderedRepr r = codec.encode(zero);
  for (double v : r.tokens.data) CHECK(v == 0.0);

  // with the identity basis the layout is directly checkable: coefficient of
  // (token t, direction j) sits at flat slot j * n_tokens + t
  Matrix z(2, 2);
  z.at(0, 0) = 1.0;
  z.at(0, 1) = 2.0;
  z.at(1, 0) = 3.0;
  z.at(1, 1) = 4.0;
  OrderedRepr rz = codec.encode(z);
  CHECK(rz.tokens.data == std::vector<double>{1.0, 3.0, 2.0, 4.0});
}

TEST_CASE("encode is pure") {
  Dataset data = random_dataset(32, 4, 4, 707);
  LinearOrthoCodec codec = fit_linear_oracle(data, 3, 2);
  OrderedRepr a = codec.encode(data.samples[0]);
  OrderedRepr b = codec.encode(data.samples[0]);
  CHECK(a.tokens == b.tokens);

  MetaAE mae(tiny_config());
  Matrix z = random_gaussian(6, 8, *std::make_unique<Rng>(1));
  CHECK(mae.encode(z).tokens == mae.encode(z).tokens);
}

TEST_CASE("fit_linear_oracle requires at least d_z samples") {
  Dataset data = random_dataset(5, 4, 8, 808);
  CHECK_THROWS_AS(fit_linear_oracle(data, 1, 2), ConfigError);
}

TEST_CASE("MetaAE gradients match central finite differences") {
  MetaAE mae(tiny_config());
  Dataset data = random_dataset(2, 6, 8, 909, 4, 0.1);
  std::vector<const Matrix*> batch{&data.samples[0], &data.samples[1]};
  std::vector<int> levels{1, 3};

  mae.params().zero_grad();
  LossReport base = mae.batch_loss(batch, levels, nullptr, true);
  // Freeze the error-head targets at their base values: finite differences
  // then probe exactly the stop-gradient loss surface.
  std::vector<double> frozen = base.e_true;
  auto loss = [&] { return mae.batch_loss(batch, levels, &frozen, false).l_total; };

  const auto rep = grad_check(mae.params(), loss, 1e-5);
  INFO("worst: " << rep.worst_param << "[" << rep.worst_index << "] analytic "
                 << rep.analytic << " numeric " << rep.numeric);
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("stop-gradient: the error target path is real but carries no gradient") {
  MetaAE mae(tiny_config());
  Dataset data = random_dataset(2, 6, 8, 919, 4, 0.1);
  std::vector<const Matrix*> batch{&data.samples[0], &data.samples[1]};
  std::vector<int> levels{2, 2};

  // e_true genuinely depends on the encoder weights...
  Param& w = mae.params().get("enc.in.w");
  const double h = 1e-5;
  const double saved = w.value.at(0, 0);
  const double e0 = mae.batch_loss(batch, levels, nullptr, false).e_true[0];
  w.value.at(0, 0) = saved + h;
  const double e1 = mae.batch_loss(batch, levels, nullptr, false).e_true[0];
  w.value.at(0, 0) = saved;
  CHECK(std::fabs(e1 - e0) / h > 1e-6);

  // ...but the analytic L_err gradient ignores that path: finite differences
  // of the unfrozen loss disagree with the analytic gradient unless the
  // target is frozen.
  mae.params().zero_grad();
  LossReport base = mae.batch_loss(batch, levels, nullptr, true);
  std::vector<double> frozen = base.e_true;

  double fd_frozen, fd_unfrozen;
  {
    w.value.at(0, 0) = saved + h;
    const double lp = mae.batch_loss(batch, levels, &frozen, false).l_total;
    const double lp_u = mae.batch_loss(batch, levels, nullptr, false).l_total;
    w.value.at(0, 0) = saved - h;
    const double lm = mae.batch_loss(batch, levels, &frozen, false).l_total;
    const double lm_u = mae.batch_loss(batch, levels, nullptr, false).l_total;
    w.value.at(0, 0) = saved;
    fd_frozen = (lp - lm) / (2 * h);
    fd_unfrozen = (lp_u - lm_u) / (2 * h);
  }
  const double analytic = mae.params().get("enc.in.w").grad.at(0, 0);
  CHECK(std::fabs(analytic - fd_frozen) <= 1e-6 * std::max(1.0, std::fabs(analytic)));
  // the dropped path changes the derivative measurably
  CHECK(std::fabs(fd_unfrozen - fd_frozen) > 1e-9);
}

TEST_CASE("level losses respond only to chunks at or below the level") {
  MetaAE mae(tiny_config());
  Rng rng(4);
  Matrix z = random_gaussian(6, 8, rng);
  OrderedRepr r = mae.encode(z);
  const int k = mae.levels();

  auto level_loss = [&](const OrderedRepr& rep, int level) {
    return true_error(mae.decode(prefix_mask(rep, level), level).z_hat, z);
  };

  for (int chunk = 1; chunk <= k; ++chunk) {
    OrderedRepr perturbed = r;
    const int lo = chunk == 1 ? 0 : r.boundaries[static_cast<std::size_t>(chunk - 2)];
    const int hi = r.boundaries[static_cast<std::size_t>(chunk - 1)];
    // non-uniform perturbation: constant row shifts are invisible to the
    // row-normalizing decoder and would mask a genuine dependence
    for (int t = lo; t < hi; ++t)
      for (int j = 0; j < perturbed.tokens.cols; ++j)
        perturbed.tokens.at(t, j) += 0.1 * (j + 1) + 0.05 * t;

    int responding = 0;
    for (int level = 1; level <= k; ++level) {
      const double base = level_loss(r, level);
      const double after = level_loss(perturbed, level);
      if (level < chunk) {
        CHECK(base == after);  // bit-identical: the chunk is masked out
      } else {
        CHECK(base != after);
      }
      if (base != after) ++responding;
    }
    CHECK(responding == k - chunk + 1);
  }
}

TEST_CASE("an exact reconstruction with a perfect error head has zero loss") {
  // the loss assembly at the fixed point: z_hat == z and e_hat == e == 0
  Matrix z(2, 2);
  z.fill(1.0);
  const double e = true_error(z, z);
  const double l_rec = e;
  const double e_hat = 0.0;
  const double l_err = (e_hat - e) * (e_hat - e);
  CHECK(l_rec + 1.0 * l_err == 0.0);
}

TEST_CASE("decode at full level equals decode of the unmasked representation") {
  MetaAE mae(tiny_config());
  Rng rng(8);
  Matrix z = random_gaussian(6, 8, rng);
  OrderedRepr r = mae.encode(z);
  DecodeResult a = mae.decode(prefix_mask(r, 3), 3);
  DecodeResult b = mae.decode(r.tokens, 3);
  CHECK(a.z_hat == b.z_hat);
  CHECK(a.e_hat == b.e_hat);
}

TEST_CASE("short training already orders predicted error by level") {
  MetaAEConfig cfg = tiny_config();
  cfg.batch_size = 16;
  cfg.epochs = 40;
  cfg.lr = 2e-3;
  Dataset data = random_dataset(256, cfg.n_tokens, cfg.d_latent, 111, /*rank=*/5,
                                /*noise=*/0.02);
  auto [train, held] = data.split();
  MetaAE mae(cfg);
  mae.train(train);

  double e1 = 0.0, ek = 0.0;
  for (const Matrix* z : held) {
    OrderedRepr r = mae.encode(*z);
    e1 += mae.decode(prefix_mask(r, 1), 1).e_hat;
    ek += mae.decode(prefix_mask(r, cfg.k_levels), cfg.k_levels).e_hat;
  }
  CHECK(e1 / static_cast<double>(held.size()) > ek / static_cast<double>(held.size()));
}

TEST_CASE("MetaAE checkpoints round trip through the codec loader") {
  MetaAE mae(tiny_config());
  const std::string bytes = mae.serialize();
  auto loaded = codec_from_bytes(bytes);
  REQUIRE(loaded->kind() == "metaae");
  CHECK(loaded->checksum() == mae.checksum());

  Rng rng(5);
  Matrix z = random_gaussian(6, 8, rng);
  CHECK(loaded->encode(z).tokens == mae.encode(z).tokens);

  Dataset data = random_dataset(48, 4, 4, 515);
  LinearOrthoCodec lin = fit_linear_oracle(data, 3, 2);
  auto lin2 = codec_from_bytes(lin.serialize());
  REQUIRE(lin2->kind() == "linear-ortho");
  CHECK(lin2->checksum() == lin.checksum());
  CHECK(lin2->encode(data.samples[0]).tokens == lin.encode(data.samples[0]).tokens);
}

TEST_CASE("train_step aborts on non-finite loss with diagnostics") {
  MetaAE mae(tiny_config());
  Dataset data = random_dataset(4, 6, 8, 121);
  // poison a head bias: it sits after the final norm, so the blow-up is not
  // normalized away before reaching the loss
  mae.params().get("dec.recon.b").value.fill(1e200);
  std::vector<const Matrix*> batch{&data.samples[0], &data.samples[1]};
  Rng rng(1);
  CHECK_THROWS_AS(mae.train_step(batch, rng), TrainingError);
}
