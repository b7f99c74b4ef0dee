#include <catch2/catch_amalgamated.hpp>

#include "prolat/control.hpp"
#include "prolat/dataset.hpp"
#include "prolat/linear_codec.hpp"

using namespace prolat;

namespace {

struct Fixture {
  Dataset data;
  LinearOrthoCodec codec;

  Fixture()
      : data(gen_synthetic({/*n_samples=*/128, /*n_tokens=*/8, /*d_latent=*/8,
                            /*rank=*/3, /*noise_std=*/0.05, /*seed=*/321})),
        codec(fit_linear_oracle(data, 11, 4)) {}
};

}  // namespace

TEST_CASE("evaluate applies the threshold-or-last-level rule") {
  SECTION("zero threshold terminates immediately") {
    const Decision d = evaluate(0.3, 0.0, 1, 4);
    CHECK(d.terminate);
    CHECK(d.reason == TerminateReason::quality_met);
  }
  SECTION("unreachable threshold terminates at the last level") {
    const Decision d = evaluate(0.9, 1.1, 4, 4);
    CHECK(d.terminate);
    CHECK(d.reason == TerminateReason::max_level);
  }
  SECTION("below threshold mid-run requests the next level") {
    const Decision d = evaluate(0.5, 0.8, 2, 4);
    CHECK_FALSE(d.terminate);
    CHECK(d.next_level == 3);
  }
  SECTION("a tie counts as satisfied") {
    const Decision d = evaluate(0.8, 0.8, 1, 4);
    CHECK(d.terminate);
    CHECK(d.reason == TerminateReason::quality_met);
  }
}

TEST_CASE("ledger_compare reproduces the closed-form totals") {
  {
    const LedgerTotals t = ledger_compare(4, 1.0);
    CHECK(t.progressive_total == 4.0);
    CHECK(t.non_progressive_total == 10.0);
  }
  {
    const LedgerTotals t = ledger_compare(1, 5.0);
    CHECK(t.progressive_total == 5.0);
    CHECK(t.non_progressive_total == 5.0);  // equal at the K = 1 boundary
  }
  {
    const LedgerTotals t = ledger_compare(8, 100.0);
    CHECK(t.progressive_total == 800.0);
    CHECK(t.non_progressive_total == 3600.0);
  }
  for (int k = 1; k <= 16; ++k) {
    const double b = 7.0;
    const LedgerTotals t = ledger_compare(k, b);
    CHECK(t.progressive_total == k * b);                    // linear in rounds
    CHECK(t.non_progressive_total == k * (k + 1) / 2.0 * b);  // quadratic
    if (k > 1) CHECK(t.non_progressive_total > t.progressive_total);
  }
  CHECK_THROWS_AS(ledger_compare(0, 1.0), ArgumentError);
  CHECK_THROWS_AS(ledger_compare(4, 0.0), ArgumentError);
}

TEST_CASE("cost ledger steps follow the scheme") {
  CostLedger prog(Scheme::progressive, 2.0);
  CostLedger nonp(Scheme::non_progressive, 2.0);
  for (int l = 1; l <= 4; ++l) {
    prog.advance(l);
    nonp.advance(l);
    CHECK(prog.cumulative == 2.0 * l);
    CHECK(nonp.cumulative == 2.0 * l * (l + 1) / 2.0);
  }
  CHECK(prog.per_step == std::vector<double>{2, 2, 2, 2});
  CHECK(nonp.per_step == std::vector<double>{2, 4, 6, 8});
}

TEST_CASE("zero threshold ends a session after one round") {
  Fixture f;
  const LinkModel link{1e6, 0.0, 0.2, 0.0};
  const Transcript t = run_session(f.codec, link, f.data.samples[0], 0.0, 1);
  CHECK(t.rounds.size() == 1);
  CHECK(t.rounds[0].from_level == 1);
  CHECK(t.rounds[0].to_level == 1);
  CHECK(t.terminal_level == 1);
  CHECK(t.terminate_reason == "quality_met");
  CHECK(t.edge_encode_calls == 1);
  CHECK_FALSE(t.final_output.empty());
}

TEST_CASE("unreachable threshold transmits every chunk once") {
  Fixture f;
  const LinkModel link{1e6, 0.0, 0.2, 0.0};
  for (int l0 = 1; l0 <= 4; ++l0) {
    const Transcript t = run_session(f.codec, link, f.data.samples[1], 1.1, l0);
    CHECK(static_cast<int>(t.rounds.size()) == 4 - l0 + 1);
    CHECK(t.terminal_level == 4);
    CHECK(t.terminate_reason == "max_level");
    CHECK(t.rounds.front().from_level == 1);
    CHECK(t.rounds.front().to_level == l0);
    CHECK(t.rounds.back().to_level == 4);
    CHECK(t.edge_encode_calls == 1);
  }
}

TEST_CASE("session bytes equal the sum of emitted frames") {
  Fixture f;
  const LinkModel link{};
  const Transcript t = run_session(f.codec, link, f.data.samples[2], 1.1, 1);
  std::size_t total = 0;
  for (const auto& r : t.rounds) {
    total += r.frame_bytes;
    CHECK(r.frame_bytes > r.body_bytes);
    CHECK(r.cumulative_frame_bytes == total);
  }
  CHECK(t.total_frame_bytes == total);

  // frames can be reproduced independently from the cached representation
  EdgeSession probe(f.codec);
  probe.open(f.data.samples[2]);
  const std::string body =
      make_chunk_payload(t.session_id, 1, probe.initial_rows(1), f.codec.checksum()).to_json();
  CHECK(t.rounds[0].frame_bytes == frame_http_post("/v1/chunk", body).size());
}

TEST_CASE("modeled session delay is additive over rounds") {
  Fixture f;
  const LinkModel link{1e6, 0.0, 0.2, 0.015};
  const Transcript t = run_session(f.codec, link, f.data.samples[3], 1.1, 1);
  double sum = 0.0;
  for (const auto& r : t.rounds) {
    CHECK(r.modeled_delay_s == link_delay(r.frame_bytes, link));
    sum += r.modeled_delay_s;
  }
  CHECK(t.total_modeled_delay_s == Catch::Approx(sum));
}

TEST_CASE("raising the threshold never lowers the terminal level") {
  Fixture f;
  const LinkModel link{};
  int prev_terminal = 0;
  for (double eps : {0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 1.05}) {
    const Transcript t = run_session(f.codec, link, f.data.samples[4], eps, 1);
    CHECK(t.terminal_level >= prev_terminal);
    prev_terminal = t.terminal_level;
    CHECK(t.terminal_level == predict_terminal_level(f.codec, f.data.samples[4], eps, 1));
  }
}

TEST_CASE("cloud rejects checksum mismatches and out-of-order chunks") {
  Fixture f;
  CloudSessionCore cloud(f.codec, 1.1, 1);
  EdgeSession edge(f.codec);
  edge.open(f.data.samples[5]);

  SECTION("wrong checksum") {
    CHECK_THROWS_AS(cloud.handle_rows(edge.initial_rows(1), 1, "0000000000000000"),
                    ProtocolError);
  }

  SECTION("first payload must match the announced initial level") {
    CHECK_THROWS_AS(cloud.handle_rows(edge.chunk(2), 2, f.codec.checksum()), ProtocolError);
  }

  SECTION("later chunks must be sequential") {
    cloud.handle_rows(edge.initial_rows(1), 1, f.codec.checksum());
    CHECK_THROWS_AS(cloud.handle_rows(edge.chunk(3), 3, f.codec.checksum()), ProtocolError);
    CHECK_THROWS_AS(cloud.handle_rows(edge.chunk(1), 1, f.codec.checksum()), ProtocolError);
  }

  SECTION("wrong chunk shape is rejected") {
    cloud.handle_rows(edge.initial_rows(1), 1, f.codec.checksum());
    CHECK_THROWS_AS(cloud.handle_rows(Matrix(1, f.codec.token_dim()), 2, f.codec.checksum()),
                    ProtocolError);
  }
}

TEST_CASE("cloud reassembles exactly the wire-rounded edge prefix") {
  Fixture f;
  EdgeSession edge(f.codec);
  CloudSessionCore cloud(f.codec, 1.1, 2);
  const LinkModel link{};
  const Matrix& z = f.data.samples[6];
  const Transcript t = run_session(edge, cloud, f.codec, link, z);
  CHECK(t.terminal_level == 4);

  const Matrix edge_prefix = prefix_mask(edge.cached_repr(), 4);
  const Matrix rounded =
      matrix_from_f32(f32_bytes(edge_prefix), edge_prefix.rows, edge_prefix.cols);
  CHECK(cloud.partial().masked_matrix() == rounded);
  CHECK(cloud.quality_history().size() == t.rounds.size());
}

TEST_CASE("every session terminates within K - l0 + 1 rounds") {
  Fixture f;
  const LinkModel link{};
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const double eps = rng.uniform01() * 1.2;
    const int l0 = static_cast<int>(rng.uniform_int(1, 4));
    const Transcript t =
        run_session(f.codec, link, f.data.samples[static_cast<std::size_t>(trial)], eps, l0);
    CHECK(static_cast<int>(t.rounds.size()) <= 4 - l0 + 1);
    CHECK(t.terminal_level >= l0);
  }
}
