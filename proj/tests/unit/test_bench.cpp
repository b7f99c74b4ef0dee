#include <catch2/catch_amalgamated.hpp>

#include "prolat/bench.hpp"
#include "prolat/endpoints.hpp"

using namespace prolat;

TEST_CASE("srcc on hand-checked sequences") {
  CHECK(srcc({1, 2, 3, 4}, {1, 2, 3, 4}) == Catch::Approx(1.0));
  CHECK(srcc({1, 2, 3, 4}, {4, 3, 2, 1}) == Catch::Approx(-1.0));
  CHECK(srcc({1, 2, 3, 4}, {1, 3, 2, 4}) == Catch::Approx(0.8));
  CHECK(srcc({10, 20, 30}, {1e-3, 2e-3, 5e-3}) == Catch::Approx(1.0));
  // ties take average ranks; identical inputs still correlate perfectly
  CHECK(srcc({1, 1, 2, 3}, {1, 1, 2, 3}) == Catch::Approx(1.0));
  CHECK_THROWS_AS(srcc({1, 2}, {1, 2, 3}), ArgumentError);
  CHECK_THROWS_AS(srcc({1}, {1}), ArgumentError);
  CHECK_THROWS_AS(srcc({1, 1}, {1, 2}), ArgumentError);  // constant input
}

TEST_CASE("synthetic generation is deterministic and rank-controlled") {
  SyntheticSpec spec;
  spec.n_samples = 64;
  spec.n_tokens = 8;
  spec.d_latent = 12;
  spec.rank = 2;
  spec.noise_std = 0.0;
  spec.seed = 42;

  SECTION("same seed, same bytes") {
    const Dataset a = gen_synthetic(spec);
    const Dataset b = gen_synthetic(spec);
    CHECK(fnv1a64_hex(a.serialize()) == fnv1a64_hex(b.serialize()));
    spec.seed = 43;
    const Dataset c = gen_synthetic(spec);
    CHECK(fnv1a64_hex(a.serialize()) != fnv1a64_hex(c.serialize()));
  }

  SECTION("noiseless rank-2 data reconstructs exactly at full level") {
    const Dataset d = gen_synthetic(spec);
    LinearOrthoCodec codec = fit_linear_oracle(d, 1, 4);
    double full_err = 0.0;
    for (const auto& z : d.samples) full_err += codec.sample_error(z, 4);
    CHECK(full_err / d.count() < 1e-9);
  }

  SECTION("full-rank data has no near-zero spectrum tail") {
    spec.rank = 12;
    spec.noise_std = 0.1;
    const Dataset d = gen_synthetic(spec);
    LinearOrthoCodec codec = fit_linear_oracle(d, 1, 4);
    CHECK(codec.eigenvalues().back() > 1e-3);
  }

  SECTION("dataset files round trip") {
    const Dataset d = gen_synthetic(spec);
    const Dataset back = Dataset::deserialize(d.serialize());
    CHECK(back.n_tokens == d.n_tokens);
    CHECK(back.count() == d.count());
    CHECK(back.samples[5] == d.samples[5]);
  }
}

TEST_CASE("cost table reproduces the closed forms") {
  const auto rows = run_cost_table(16, 1.0);
  REQUIRE(rows.size() == 16);
  CHECK(rows[0].ratio == 1.0);
  CHECK(rows[3].ratio == 2.5);  // K = 4
  for (const auto& r : rows) CHECK(r.ratio == (r.k + 1) / 2.0);

  // K = 16 with the full latent split into 16 chunks: non-progressive total
  // is 8.5x the payload
  const double payload_kib = 192.3;
  const auto big = run_cost_table(16, payload_kib / 16.0);
  CHECK(big[15].progressive == Catch::Approx(192.3));
  CHECK(big[15].non_progressive == Catch::Approx(1634.55));

  const std::string csv = cost_table_csv(rows);
  CHECK(csv.rfind("k,progressive_bytes,non_progressive_bytes,ratio\n", 0) == 0);
  CHECK(csv.find("\n4,4,10,2.5\n") != std::string::npos);
}

namespace {

struct CurveFixture {
  Dataset data;
  LinearOrthoCodec codec;
  std::vector<const Matrix*> held;

  CurveFixture()
      : data(gen_synthetic({/*n_samples=*/256, /*n_tokens=*/16, /*d_latent=*/32,
                            /*rank=*/12, /*noise_std=*/0.05, /*seed=*/404})),
        codec(fit_linear_oracle(data, 9, 4)) {
    auto [train, ho] = data.split();
    held = ho;
  }
};

}  // namespace

TEST_CASE("curves: delay scales linearly with the level on an overhead-free link") {
  CurveFixture f;
  const LinkModel link{1e6, 0.0, 0.2, 0.0};
  const CurveResult curves = run_curves(f.codec, f.held, link);
  REQUIRE(curves.points.size() == 4);
  const double full = curves.points.back().modeled_delay_s;
  for (const CurvePoint& p : curves.points)
    CHECK(std::fabs(p.modeled_delay_s / full - p.ltl_ratio) <= 0.05 * p.ltl_ratio);
}

TEST_CASE("curves: oracle error column matches trailing eigenvalue mass") {
  CurveFixture f;
  const CurveResult curves = run_curves(f.codec, f.held, LinkModel{});
  for (const CurvePoint& p : curves.points) {
    const int cut = f.codec.boundaries()[static_cast<std::size_t>(p.level - 1)] * 32 / 16;
    double trailing = 0.0;
    for (int j = cut; j < 32; ++j)
      trailing += f.codec.eigenvalues()[static_cast<std::size_t>(j)];
    // held-out mean vs training-spectrum mass: same distribution, so close,
    // but the exact identity is against the fitting set
    CHECK(p.mean_true_error == Catch::Approx(trailing / 32.0).margin(0.02));
  }
  // the exact identity, on the fitting set
  std::vector<const Matrix*> all;
  for (const auto& s : f.data.samples) all.push_back(&s);
  const CurveResult exact = run_curves(f.codec, all, LinkModel{});
  for (const CurvePoint& p : exact.points) {
    const int cut = f.codec.boundaries()[static_cast<std::size_t>(p.level - 1)] * 32 / 16;
    double trailing = 0.0;
    for (int j = cut; j < 32; ++j)
      trailing += f.codec.eigenvalues()[static_cast<std::size_t>(j)];
    CHECK(p.mean_true_error == Catch::Approx(trailing / 32.0).margin(1e-8));
  }
}

TEST_CASE("curves: SRCC of mean quality against negated mean error is 1 for the oracle") {
  CurveFixture f;
  const CurveResult curves = run_curves(f.codec, f.held, LinkModel{});
  CHECK(curves.srcc_q_vs_neg_error == 1.0);
}

TEST_CASE("curves: bytes column equals a real loopback session ledger") {
  CurveFixture f;
  const LinkModel link{};
  const CurveResult curves = run_curves(f.codec, f.held, link);

  ServiceConfig cfg;
  cfg.epsilon = 2.0;  // force full transmission
  cfg.initial_level = 1;
  CloudService cloud(f.codec, cfg);
  Link loop = Link::loopback(link, cloud.loopback_handler());
  EdgeAgent edge(f.codec);
  const Transcript t = edge.run_session(loop, *f.held.front());
  REQUIRE(t.rounds.size() == curves.points.size());
  for (std::size_t i = 0; i < t.rounds.size(); ++i)
    CHECK(curves.points[i].cumulative_bytes == t.rounds[i].cumulative_frame_bytes);
}

TEST_CASE("curves CSV output is stable and well-formed") {
  CurveFixture f;
  const CurveResult a = run_curves(f.codec, f.held, LinkModel{});
  const CurveResult b = run_curves(f.codec, f.held, LinkModel{});
  CHECK(curves_csv(a) == curves_csv(b));
  CHECK(curves_csv(a).rfind(
            "level,ltl_ratio,mean_q,mean_true_error,modeled_delay_s,cumulative_bytes\n", 0) ==
        0);
  // one header plus one row per level
  const std::string csv = curves_csv(a);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("selftest property suite passes") {
  std::vector<std::string> lines;
  const SelftestReport rep = run_selftest(7, [&](const std::string& s) { lines.push_back(s); });
  for (const auto& l : lines) INFO(l);
  CHECK(rep.prop1_cost);
  CHECK(rep.prop2_masked_gradients);
  CHECK(rep.prop3_oracle_monotone);
  CHECK(rep.prop3_trained_monotone);
  CHECK(lines.size() == 4);
}
