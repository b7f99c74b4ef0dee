#pragma once

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "prolat/control.hpp"
#include "prolat/dataset.hpp"
#include "prolat/linear_codec.hpp"
#include "prolat/metaae.hpp"

namespace prolat {

// ---- Spearman rank correlation ----

namespace detail {

// average ranks, ties share the mean of their positions (1-based)
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// Spearman rank correlation with average-rank ties (Pearson on ranks).
inline double srcc(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw ArgumentError("srcc: length mismatch");
  if (xs.size() < 2) throw ArgumentError("srcc: need at least 2 points");
  const std::vector<double> rx = detail::average_ranks(xs);
  const std::vector<double> ry = detail::average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) throw ArgumentError("srcc: constant input");
  return sxy / std::sqrt(sxx * syy);
}

// ---- quality/delay curves ----

struct CurvePoint {
  int level = 0;
  double ltl_ratio = 0.0;
  double mean_q = 0.0;
  double mean_true_error = 0.0;
  double modeled_delay_s = 0.0;
  std::size_t cumulative_bytes = 0;
};

struct CurveResult {
  std::vector<CurvePoint> points;
  double srcc_q_vs_neg_error = 0.0;
  Transcript ledger_session;  // the forced-full loopback session behind the
                              // bytes and delay columns
};

// Per level: mean q and mean true error over the evaluation samples, plus
// bytes/delay from an actual forced-full loopback session (epsilon > 1,
// initial level 1), whose uplink ledger is the source of truth.
inline CurveResult run_curves(const Codec& codec,
                              const std::vector<const Matrix*>& eval_samples,
                              const LinkModel& link) {
  if (eval_samples.empty()) throw ArgumentError("run_curves: no samples");
  const int k = codec.levels();
  CurveResult out;

  // "s1" is what a fresh cloud service issues, so these frames are
  // byte-identical to a real first session's uplink.
  out.ledger_session = run_session(codec, link, *eval_samples.front(), /*eps=*/2.0,
                                   /*initial_level=*/1, "s1");
  if (static_cast<int>(out.ledger_session.rounds.size()) != k)
    throw NumericError("run_curves: forced-full session did not visit every level");

  std::vector<double> mean_q(static_cast<std::size_t>(k), 0.0);
  std::vector<double> mean_err(static_cast<std::size_t>(k), 0.0);
  for (const Matrix* z : eval_samples) {
    const OrderedRepr r = codec.encode(*z);
    for (int l = 1; l <= k; ++l) {
      const DecodeResult res = codec.decode(prefix_mask(r, l), l);
      mean_q[static_cast<std::size_t>(l - 1)] += res.q;
      mean_err[static_cast<std::size_t>(l - 1)] += true_error(res.z_hat, *z);
    }
  }
  const double inv = 1.0 / static_cast<double>(eval_samples.size());

  double cum_delay = 0.0;
  for (int l = 1; l <= k; ++l) {
    const TranscriptRound& round = out.ledger_session.rounds[static_cast<std::size_t>(l - 1)];
    cum_delay += round.modeled_delay_s;
    CurvePoint p;
    p.level = l;
    p.ltl_ratio = static_cast<double>(l) / k;
    p.mean_q = mean_q[static_cast<std::size_t>(l - 1)] * inv;
    p.mean_true_error = mean_err[static_cast<std::size_t>(l - 1)] * inv;
    p.modeled_delay_s = cum_delay;
    p.cumulative_bytes = round.cumulative_frame_bytes;
    out.points.push_back(p);
  }

  std::vector<double> qs, neg_errs;
  for (const CurvePoint& p : out.points) {
    qs.push_back(p.mean_q);
    neg_errs.push_back(-p.mean_true_error);
  }
  out.srcc_q_vs_neg_error = srcc(qs, neg_errs);
  return out;
}

// ---- Proposition-1 cost table ----

struct CostRow {
  int k = 0;
  double progressive = 0.0;
  double non_progressive = 0.0;
  double ratio = 0.0;
};

inline std::vector<CostRow> run_cost_table(int k_max, double chunk_cost) {
  if (k_max < 1) throw ArgumentError("run_cost_table: need K >= 1");
  std::vector<CostRow> rows;
  for (int k = 1; k <= k_max; ++k) {
    const LedgerTotals t = ledger_compare(k, chunk_cost);
    CostRow r{k, t.progressive_total, t.non_progressive_total,
              t.non_progressive_total / t.progressive_total};
    const double expect = (static_cast<double>(k) + 1.0) / 2.0;
    if (std::fabs(r.ratio - expect) > 1e-12 * expect)
      throw NumericError("run_cost_table: ratio formula violated at K=" + std::to_string(k));
    r.ratio = expect;
    rows.push_back(r);
  }
  return rows;
}

// ---- CSV output ----

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace detail

inline std::string curves_csv(const CurveResult& curves) {
  std::string out = "level,ltl_ratio,mean_q,mean_true_error,modeled_delay_s,cumulative_bytes\n";
  for (const CurvePoint& p : curves.points) {
    out += std::to_string(p.level) + "," + detail::fmt_double(p.ltl_ratio) + "," +
           detail::fmt_double(p.mean_q) + "," + detail::fmt_double(p.mean_true_error) + "," +
           detail::fmt_double(p.modeled_delay_s) + "," + std::to_string(p.cumulative_bytes) +
           "\n";
  }
  return out;
}

inline std::string cost_table_csv(const std::vector<CostRow>& rows) {
  std::string out = "k,progressive_bytes,non_progressive_bytes,ratio\n";
  for (const CostRow& r : rows)
    out += std::to_string(r.k) + "," + detail::fmt_double(r.progressive) + "," +
           detail::fmt_double(r.non_progressive) + "," + detail::fmt_double(r.ratio) + "\n";
  return out;
}

inline std::string transcript_csv(const Transcript& t) {
  std::string out =
      "round,from_level,to_level,body_bytes,frame_bytes,cumulative_bytes,"
      "modeled_delay_s,quality,status\n";
  for (const TranscriptRound& r : t.rounds)
    out += std::to_string(r.round) + "," + std::to_string(r.from_level) + "," +
           std::to_string(r.to_level) + "," + std::to_string(r.body_bytes) + "," +
           std::to_string(r.frame_bytes) + "," + std::to_string(r.cumulative_frame_bytes) +
           "," + detail::fmt_double(r.modeled_delay_s) + "," +
           detail::fmt_double(r.quality) + "," + r.status + "\n";
  return out;
}

// ---- executable property suite (Propositions 1-3) ----

struct SelftestReport {
  bool prop1_cost = false;
  bool prop2_masked_gradients = false;
  bool prop3_oracle_monotone = false;
  bool prop3_trained_monotone = false;

  bool all() const {
    return prop1_cost && prop2_masked_gradients && prop3_oracle_monotone &&
           prop3_trained_monotone;
  }
};

// Runs the three propositions as executable checks on freshly generated
// desk-scale inputs. `log` receives one line per check.
inline SelftestReport run_selftest(std::uint64_t seed,
                                   const std::function<void(const std::string&)>& log) {
  SelftestReport rep;
  auto note = [&](const std::string& line) {
    if (log) log(line);
  };

  // Proposition 1: exact ledger arithmetic for K = 1..16.
  {
    bool ok = true;
    for (int k = 1; k <= 16; ++k) {
      const double b = 3.0;
      const LedgerTotals t = ledger_compare(k, b);
      if (t.progressive_total != k * b) ok = false;
      if (t.non_progressive_total != k * (k + 1) / 2.0 * b) ok = false;
      if (k > 1 && !(t.non_progressive_total > t.progressive_total)) ok = false;
    }
    rep.prop1_cost = ok;
    note(std::string(ok ? "pass" : "FAIL") + " prop1: progressive Kb vs K(K+1)/2 b, K=1..16");
  }

  // Proposition 2: level losses respond to chunk i iff level >= i.
  {
    MetaAEConfig cfg;
    cfg.n_tokens = 8;
    cfg.d_latent = 8;
    cfg.d_model = 8;
    cfg.n_layers_enc = 1;
    cfg.n_layers_dec = 1;
    cfg.n_heads = 2;
    cfg.k_levels = 4;
    cfg.batch_size = 16;
    cfg.epochs = 10;
    cfg.seed = seed;
    SyntheticSpec spec;
    spec.n_samples = 128;
    spec.n_tokens = cfg.n_tokens;
    spec.d_latent = cfg.d_latent;
    spec.rank = 4;
    spec.noise_std = 0.05;
    spec.seed = seed + 1;
    Dataset data = gen_synthetic(spec);
    auto [train, held] = data.split();
    MetaAE mae(cfg);
    mae.train(train);

    const Matrix& z = *held.front();
    const OrderedRepr r = mae.encode(z);
    bool ok = true;
    for (int chunk = 1; chunk <= cfg.k_levels; ++chunk) {
      OrderedRepr perturbed = r;
      const int lo = chunk == 1 ? 0 : r.boundaries[static_cast<std::size_t>(chunk - 2)];
      const int hi = r.boundaries[static_cast<std::size_t>(chunk - 1)];
      for (int t = lo; t < hi; ++t)
        for (int j = 0; j < perturbed.tokens.cols; ++j)
          perturbed.tokens.at(t, j) += 0.05 * (j + 1);
      int responding = 0;
      for (int level = 1; level <= cfg.k_levels; ++level) {
        const double base = true_error(mae.decode(prefix_mask(r, level), level).z_hat, z);
        const double after =
            true_error(mae.decode(prefix_mask(perturbed, level), level).z_hat, z);
        if (level < chunk && base != after) ok = false;  // must be bit-identical
        if (base != after) ++responding;
      }
      if (responding != cfg.k_levels - chunk + 1) ok = false;
    }
    rep.prop2_masked_gradients = ok;
    note(std::string(ok ? "pass" : "FAIL") +
         " prop2: chunk i feeds exactly K-i+1 level losses");
  }

  // Proposition 3, oracle form: exact monotonicity on several datasets.
  {
    bool ok = true;
    for (int variant = 0; variant < 3; ++variant) {
      SyntheticSpec spec;
      spec.n_samples = 128;
      spec.n_tokens = 12;
      spec.d_latent = 16;
      spec.rank = 4 + 4 * variant;
      spec.noise_std = variant == 0 ? 0.0 : 0.05;
      spec.seed = seed + 10 + static_cast<std::uint64_t>(variant);
      Dataset data = gen_synthetic(spec);
      LinearOrthoCodec codec = fit_linear_oracle(data, seed, 4);
      std::vector<double> mean_err(4, 0.0);
      for (const auto& z : data.samples)
        for (int l = 1; l <= 4; ++l)
          mean_err[static_cast<std::size_t>(l - 1)] += codec.sample_error(z, l);
      for (int l = 1; l < 4; ++l)
        if (mean_err[static_cast<std::size_t>(l)] >
            mean_err[static_cast<std::size_t>(l - 1)] + 1e-10)
          ok = false;
    }
    rep.prop3_oracle_monotone = ok;
    note(std::string(ok ? "pass" : "FAIL") +
         " prop3 (oracle): mean reconstruction error non-increasing in level");
  }

  // Proposition 3, trained form: quick MetaAE run, held-out errors ordered.
  {
    MetaAEConfig cfg;
    cfg.n_tokens = 8;
    cfg.d_latent = 12;
    cfg.d_model = 12;
    cfg.n_layers_enc = 1;
    cfg.n_layers_dec = 1;
    cfg.n_heads = 2;
    cfg.k_levels = 4;
    cfg.batch_size = 16;
    cfg.epochs = 30;
    cfg.lr = 2e-3;
    cfg.seed = seed + 2;
    SyntheticSpec spec;
    spec.n_samples = 256;
    spec.n_tokens = cfg.n_tokens;
    spec.d_latent = cfg.d_latent;
    spec.rank = 8;
    spec.noise_std = 0.02;
    spec.seed = seed + 3;
    Dataset data = gen_synthetic(spec);
    auto [train, held] = data.split();
    MetaAE mae(cfg);
    mae.train(train);
    std::vector<double> mean_err(4, 0.0);
    for (const Matrix* z : held) {
      const OrderedRepr r = mae.encode(*z);
      for (int l = 1; l <= 4; ++l)
        mean_err[static_cast<std::size_t>(l - 1)] +=
            true_error(mae.decode(prefix_mask(r, l), l).z_hat, *z);
    }
    bool ok = true;
    for (int l = 1; l < 4; ++l)
      if (mean_err[static_cast<std::size_t>(l)] >
          1.02 * mean_err[static_cast<std::size_t>(l - 1)])
        ok = false;
    rep.prop3_trained_monotone = ok;
    note(std::string(ok ? "pass" : "FAIL") +
         " prop3 (trained): held-out error non-increasing within 2% per step");
  }

  return rep;
}

}  // namespace prolat
