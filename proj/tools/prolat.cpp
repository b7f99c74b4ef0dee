// Benchmark and experiment driver: synthetic data generation, codec
// training, curve/cost-table reproduction, loopback end-to-end sessions and
// the executable property suite.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "prolat/bench.hpp"
#include "prolat/codec_io.hpp"
#include "prolat/endpoints.hpp"

using namespace prolat;

namespace {

struct LinkFlags {
  double rate_bps = 1e6;
  double burst_bits = 32000.0;
  double overhead_ms = 40.0;

  LinkModel model() const { return {rate_bps, burst_bits, 0.2, overhead_ms / 1e3}; }
};

struct GenArgs {
  std::string out;
  SyntheticSpec spec;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string codec = "metaae";
  MetaAEConfig cfg;
  std::uint64_t oracle_seed = 7;
  int levels = 4;
};

struct CurveArgs {
  std::string checkpoint;
  std::string data;
  std::string out = "curves.csv";
  LinkFlags link;
};

struct CostArgs {
  std::string out = "cost_table.csv";
  int k_max = 16;
  double chunk_bytes = 1.0;
};

struct E2eArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  int sample = 0;
  double epsilon = 0.9;
  int initial_level = 1;
  LinkFlags link;
  bool realtime = false;
};

void add_link_flags(CLI::App* cmd, LinkFlags& link) {
  cmd->add_option("--rate-bps", link.rate_bps, "link rate in bits/second");
  cmd->add_option("--burst-bits", link.burst_bits, "token bucket burst in bits");
  cmd->add_option("--overhead-ms", link.overhead_ms,
                  "fixed per-message overhead in milliseconds");
}

int run_gen(const GenArgs& a) {
  const Dataset d = gen_synthetic(a.spec);
  d.save(a.out);
  std::printf("wrote %s: %d samples of %dx%d (digest %s)\n", a.out.c_str(), d.count(),
              d.n_tokens, d.d_latent, fnv1a64_hex(d.serialize()).c_str());
  return 0;
}

int run_train(TrainArgs& a) {
  const Dataset data = Dataset::load(a.data);
  if (a.codec == "linear") {
    const LinearOrthoCodec codec = fit_linear_oracle(data, a.oracle_seed, a.levels);
    codec.save(a.out);
    std::printf("wrote %s (linear-ortho, checksum %s)\n", a.out.c_str(),
                codec.checksum().c_str());
    return 0;
  }
  if (a.codec != "metaae") throw ConfigError("unknown codec kind: " + a.codec);
  a.cfg.n_tokens = data.n_tokens;
  a.cfg.d_latent = data.d_latent;
  auto [train, held] = data.split();
  MetaAE mae(a.cfg);
  std::printf("training metaae: %zu params, %zu train samples, %d epochs\n",
              mae.params().scalar_count(), train.size(), a.cfg.epochs);
  mae.train(train, [&](int epoch, double loss) {
    if (epoch % 8 == 0 || epoch + 1 == a.cfg.epochs)
      std::printf("  epoch %3d  loss %.6f\n", epoch, loss);
  });
  mae.save(a.out);

  double held_err = 0.0;
  for (const Matrix* z : held) {
    const OrderedRepr r = mae.encode(*z);
    held_err += true_error(mae.decode(prefix_mask(r, a.cfg.k_levels), a.cfg.k_levels).z_hat, *z);
  }
  std::printf("wrote %s (metaae, checksum %s, held-out full-level error %.6f)\n",
              a.out.c_str(), mae.checksum().c_str(),
              held_err / static_cast<double>(held.size()));
  return 0;
}

int run_curves_cmd(const CurveArgs& a) {
  const auto codec = load_codec(a.checkpoint);
  const Dataset data = Dataset::load(a.data);
  auto [train, held] = data.split();
  const CurveResult curves = run_curves(*codec, held, a.link.model());
  write_file(a.out, curves_csv(curves));
  std::printf("wrote %s (%zu levels)\n", a.out.c_str(), curves.points.size());
  std::printf("srcc(mean_q, -mean_error) = %.6f\n", curves.srcc_q_vs_neg_error);
  return 0;
}

int run_cost_cmd(const CostArgs& a) {
  const auto rows = run_cost_table(a.k_max, a.chunk_bytes);
  write_file(a.out, cost_table_csv(rows));
  std::printf("wrote %s (K = 1..%d, chunk cost %g)\n", a.out.c_str(), a.k_max, a.chunk_bytes);
  return 0;
}

int run_e2e(const E2eArgs& a) {
  const auto codec = load_codec(a.checkpoint);
  const Dataset data = Dataset::load(a.data);
  if (a.sample < 0 || a.sample >= data.count())
    throw ArgumentError("sample index out of range");

  ServiceConfig cfg;
  cfg.epsilon = a.epsilon;
  cfg.initial_level = a.initial_level;
  cfg.link = a.link.model();
  cfg.realtime = a.realtime;
  CloudService cloud(*codec, cfg);
  Link link = Link::loopback(a.link.model(), cloud.loopback_handler(), a.realtime);
  EdgeAgent edge(*codec);
  const Transcript t = edge.run_session(link, data.samples[static_cast<std::size_t>(a.sample)]);

  const std::string csv = transcript_csv(t);
  if (a.out.empty())
    std::fputs(csv.c_str(), stdout);
  else
    write_file(a.out, csv);
  std::printf("session %s: terminal level %d (%s), %zu bytes, modeled delay %.3f s\n",
              t.session_id.c_str(), t.terminal_level, t.terminate_reason.c_str(),
              t.total_frame_bytes, t.total_modeled_delay_s);
  std::printf("output: %s\n", t.final_output.c_str());
  return 0;
}

int run_selftest_cmd(std::uint64_t seed) {
  const SelftestReport rep =
      run_selftest(seed, [](const std::string& line) { std::printf("%s\n", line.c_str()); });
  std::printf("%s\n", rep.all() ? "selftest: all properties hold" : "selftest: FAILURES");
  return rep.all() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"progressive latent transmission workbench"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic latent dataset");
  cmd_gen->add_option("--out", gen.out, "output dataset file")->required();
  cmd_gen->add_option("--samples", gen.spec.n_samples, "sample count");
  cmd_gen->add_option("--tokens", gen.spec.n_tokens, "tokens per sample (N_z)");
  cmd_gen->add_option("--dim", gen.spec.d_latent, "token feature dimension (d_z)");
  cmd_gen->add_option("--rank", gen.spec.rank, "latent factor rank");
  cmd_gen->add_option("--noise", gen.spec.noise_std, "additive noise std");
  cmd_gen->add_option("--seed", gen.spec.seed, "generator seed");

  TrainArgs train;
  auto* cmd_train = app.add_subcommand("train", "fit a codec on a dataset");
  cmd_train->add_option("--data", train.data, "input dataset file")->required();
  cmd_train->add_option("--out", train.out, "output checkpoint file")->required();
  cmd_train->add_option("--codec", train.codec, "codec kind: metaae | linear");
  cmd_train->add_option("--levels", train.levels, "transmission levels K (linear codec)");
  cmd_train->add_option("--epochs", train.cfg.epochs, "training epochs");
  cmd_train->add_option("--batch", train.cfg.batch_size, "batch size");
  cmd_train->add_option("--lr", train.cfg.lr, "learning rate");
  cmd_train->add_option("--k-levels", train.cfg.k_levels, "transmission levels K");
  cmd_train->add_option("--d-model", train.cfg.d_model, "model width");
  cmd_train->add_option("--heads", train.cfg.n_heads, "attention heads");
  cmd_train->add_option("--enc-layers", train.cfg.n_layers_enc, "encoder layers");
  cmd_train->add_option("--dec-layers", train.cfg.n_layers_dec, "decoder layers");
  cmd_train->add_option("--lambda-err", train.cfg.lambda_err, "error loss weight");
  cmd_train->add_option("--seed", train.cfg.seed, "init/training seed");

  CurveArgs curves;
  auto* cmd_curves = app.add_subcommand("curves", "per-level quality/delay curve CSV");
  cmd_curves->add_option("--checkpoint", curves.checkpoint, "codec checkpoint")->required();
  cmd_curves->add_option("--data", curves.data, "dataset file")->required();
  cmd_curves->add_option("--out", curves.out, "output CSV path");
  add_link_flags(cmd_curves, curves.link);

  CostArgs cost;
  auto* cmd_cost = app.add_subcommand("cost-table", "progressive vs non-progressive cost CSV");
  cmd_cost->add_option("--out", cost.out, "output CSV path");
  cmd_cost->add_option("--k-max", cost.k_max, "largest level count");
  cmd_cost->add_option("--chunk-bytes", cost.chunk_bytes, "per-chunk cost b");

  E2eArgs e2e;
  auto* cmd_e2e = app.add_subcommand("e2e", "edge+cloud loopback session transcript");
  cmd_e2e->add_option("--checkpoint", e2e.checkpoint, "codec checkpoint")->required();
  cmd_e2e->add_option("--data", e2e.data, "dataset file")->required();
  cmd_e2e->add_option("--sample", e2e.sample, "sample index");
  cmd_e2e->add_option("--epsilon", e2e.epsilon, "quality threshold");
  cmd_e2e->add_option("--initial-level", e2e.initial_level, "initial transmission level");
  cmd_e2e->add_option("--out", e2e.out, "transcript CSV path (default stdout)");
  cmd_e2e->add_flag("--realtime", e2e.realtime, "sleep the modeled delays");
  add_link_flags(cmd_e2e, e2e.link);

  std::uint64_t selftest_seed = 7;
  auto* cmd_selftest = app.add_subcommand("selftest", "run the executable property suite");
  cmd_selftest->add_option("--seed", selftest_seed, "suite seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed()) return run_gen(gen);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_curves->parsed()) return run_curves_cmd(curves);
    if (cmd_cost->parsed()) return run_cost_cmd(cost);
    if (cmd_e2e->parsed()) return run_e2e(e2e);
    if (cmd_selftest->parsed()) return run_selftest_cmd(selftest_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
