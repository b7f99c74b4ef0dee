#pragma once

#include <functional>
#include <string>
#include <vector>

#include "prolat/codec.hpp"
#include "prolat/http.hpp"
#include "prolat/link.hpp"
#include "prolat/wire.hpp"

namespace prolat {

// ---- threshold decision rule ----

enum class TerminateReason { quality_met, max_level };

struct Decision {
  bool terminate = false;
  TerminateReason reason = TerminateReason::quality_met;
  int next_level = 0;  // set when !terminate
};

// Terminate once the quality threshold is met or the last level is reached;
// ties (q == eps) count as satisfied. eps > 1 forces full transmission.
inline Decision evaluate(double q, double eps, int level, int k_levels) {
  if (q >= eps) return {true, TerminateReason::quality_met, 0};
  if (level >= k_levels) return {true, TerminateReason::max_level, 0};
  return {false, TerminateReason::quality_met, level + 1};
}

// ---- communication cost ledger ----

enum class Scheme { progressive, non_progressive };

// Abstract per-level cost model with equal-sized chunks of cost b: the
// progressive scheme sends one chunk per step, the non-progressive baseline
// retransmits the full level-l representation at each step.
struct CostLedger {
  Scheme scheme = Scheme::progressive;
  double chunk_cost = 0.0;
  std::vector<double> per_step;
  double cumulative = 0.0;

  CostLedger(Scheme s, double b) : scheme(s), chunk_cost(b) {}

  void advance(int level) {
    const double cost =
        scheme == Scheme::progressive ? chunk_cost : chunk_cost * static_cast<double>(level);
    per_step.push_back(cost);
    cumulative += cost;
  }
};

struct LedgerTotals {
  double progressive_total = 0.0;
  double non_progressive_total = 0.0;
};

// Totals to reach level K: K*b versus K(K+1)/2 * b, strictly larger for K > 1.
inline LedgerTotals ledger_compare(int k_levels, double chunk_cost) {
  if (k_levels < 1 || chunk_cost <= 0)
    throw ArgumentError("ledger_compare: need K >= 1 and b > 0");
  CostLedger prog(Scheme::progressive, chunk_cost);
  CostLedger nonp(Scheme::non_progressive, chunk_cost);
  for (int l = 1; l <= k_levels; ++l) {
    prog.advance(l);
    nonp.advance(l);
  }
  LedgerTotals t{prog.cumulative, nonp.cumulative};
  if (k_levels > 1 && !(t.non_progressive_total > t.progressive_total))
    throw NumericError("ledger_compare: strict inequality violated");
  return t;
}

// ---- session state machines ----

// Edge side: encodes once per session, serves chunks from the cache.
class EdgeSession {
 public:
  explicit EdgeSession(const Codec& codec) : codec_(codec) {}

  void open(const Matrix& z) {
    if (opened_) throw ProtocolError("EdgeSession: already open");
    cache_ = codec_.encode(z);
    ++encode_calls_;
    opened_ = true;
  }

  // Chunks 1..l0 batched into the initial payload.
  Matrix initial_rows(int initial_level) const {
    require_open_();
    if (initial_level < 1 || initial_level > codec_.levels())
      throw ArgumentError("EdgeSession: initial level out of range");
    const int keep = cache_.boundaries[static_cast<std::size_t>(initial_level - 1)];
    Matrix out(keep, cache_.tokens.cols);
    std::copy(cache_.tokens.data.begin(),
              cache_.tokens.data.begin() + static_cast<std::ptrdiff_t>(out.size()),
              out.data.begin());
    return out;
  }

  Matrix chunk(int level) const {
    require_open_();
    return chunk_at(cache_, level);
  }

  const OrderedRepr& cached_repr() const {
    require_open_();
    return cache_;
  }

  int encode_calls() const { return encode_calls_; }
  const Codec& codec() const { return codec_; }

 private:
  void require_open_() const {
    if (!opened_) throw ProtocolError("EdgeSession: not open");
  }

  const Codec& codec_;
  OrderedRepr cache_;
  int encode_calls_ = 0;
  bool opened_ = false;
};

// Cloud side: accumulates chunks, decodes, applies the threshold rule.
class CloudSessionCore {
 public:
  using TaskFn = std::function<std::string(const Matrix& z_hat)>;

  CloudSessionCore(const Codec& codec, double epsilon, int initial_level,
                   TaskFn task = {})
      : codec_(codec),
        epsilon_(epsilon),
        initial_level_(initial_level),
        task_(std::move(task)),
        partial_(PartialRepr::empty(codec.boundaries(), codec.token_dim())) {
    if (initial_level < 1 || initial_level > codec.levels())
      throw ConfigError("CloudSessionCore: initial level out of range");
  }

  // One uplink message: the first must carry chunks 1..initial_level as a
  // single row block declared at initial_level, later ones exactly the next
  // chunk. Returns the reply the cloud would send.
  CloudReply handle_rows(const Matrix& rows, int declared_level,
                         const std::string& checksum) {
    if (checksum != codec_.checksum())
      throw ProtocolError("codec checksum mismatch: edge " + checksum + " cloud " +
                          codec_.checksum());
    if (partial_.level == 0) {
      if (declared_level != initial_level_)
        throw ProtocolError("first payload must carry levels 1.." +
                            std::to_string(initial_level_) + ", declared " +
                            std::to_string(declared_level));
      const int keep = codec_.boundaries()[static_cast<std::size_t>(declared_level - 1)];
      if (rows.rows != keep)
        throw ProtocolError("initial payload must contain " + std::to_string(keep) + " rows");
      int lo = 0;
      for (int l = 1; l <= declared_level; ++l) {
        const int hi = codec_.boundaries()[static_cast<std::size_t>(l - 1)];
        Matrix slice(hi - lo, rows.cols);
        std::copy(rows.row(lo), rows.row(lo) + slice.size(), slice.data.begin());
        partial_ = accumulate(partial_, slice, l);
        lo = hi;
      }
    } else {
      partial_ = accumulate(partial_, rows, declared_level);
    }

    const DecodeResult res = codec_.decode(partial_.masked_matrix(), partial_.level);
    quality_history_.push_back(res.q);
    const Decision d = evaluate(res.q, epsilon_, partial_.level, codec_.levels());

    CloudReply reply;
    reply.quality = res.q;
    reply.level = partial_.level;
    if (d.terminate) {
      reply.status = "ok";
      terminated_ = true;
      reason_ = d.reason;
      reply.output = task_ ? task_(res.z_hat) : default_output_(res);
    } else {
      reply.status = "need_more";
      reply.requested_level = d.next_level;
    }
    return reply;
  }

  int level() const { return partial_.level; }
  bool terminated() const { return terminated_; }
  TerminateReason reason() const { return reason_; }
  double epsilon() const { return epsilon_; }
  int initial_level() const { return initial_level_; }
  const PartialRepr& partial() const { return partial_; }
  const std::vector<double>& quality_history() const { return quality_history_; }

 private:
  static std::string default_output_(const DecodeResult& res) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "decoded level q=%.6f", res.q);
    return buf;
  }

  const Codec& codec_;
  double epsilon_;
  int initial_level_;
  TaskFn task_;
  PartialRepr partial_;
  std::vector<double> quality_history_;
  bool terminated_ = false;
  TerminateReason reason_ = TerminateReason::quality_met;
};

// ---- session transcript ----

struct TranscriptRound {
  int round = 0;
  int from_level = 0;  // first chunk level in this message
  int to_level = 0;    // last chunk level in this message
  std::size_t body_bytes = 0;
  std::size_t frame_bytes = 0;
  std::size_t cumulative_frame_bytes = 0;
  double modeled_delay_s = 0.0;
  double wall_delay_s = 0.0;
  double quality = 0.0;
  std::string status;
};

struct Transcript {
  std::string session_id;
  std::string codec_checksum;
  double epsilon = 0.0;
  int initial_level = 1;
  int terminal_level = 0;
  std::string terminate_reason;
  std::vector<TranscriptRound> rounds;
  std::vector<double> quality_history;
  std::size_t total_frame_bytes = 0;
  double total_modeled_delay_s = 0.0;
  double total_wall_delay_s = 0.0;
  std::string final_output;
  int edge_encode_calls = 0;
};

// The control contract, computed directly: the terminal level is the
// smallest l >= l0 whose quality meets the threshold, else K. Uses the
// wire-rounded representation so it matches what the cloud decodes.
inline int predict_terminal_level(const Codec& codec, const Matrix& z, double eps,
                                  int initial_level) {
  OrderedRepr r = codec.encode(z);
  Matrix rounded = matrix_from_f32(f32_bytes(r.tokens), r.tokens.rows, r.tokens.cols);
  OrderedRepr r32;
  r32.tokens = std::move(rounded);
  r32.boundaries = r.boundaries;
  for (int l = initial_level; l <= codec.levels(); ++l) {
    const DecodeResult res = codec.decode(prefix_mask(r32, l), l);
    if (res.q >= eps) return l;
  }
  return codec.levels();
}

// Full in-process closed loop between a fresh edge and cloud pair over the
// complete wire path (payload JSON, HTTP framing, modeled link delay).
inline Transcript run_session(EdgeSession& edge, CloudSessionCore& cloud,
                              const Codec& codec, const LinkModel& link, const Matrix& z,
                              const std::string& session_id = "local-1") {
  Transcript t;
  t.session_id = session_id;
  t.codec_checksum = codec.checksum();
  t.epsilon = cloud.epsilon();
  t.initial_level = cloud.initial_level();

  edge.open(z);
  const int k = codec.levels();
  int round = 0;
  for (;;) {
    ++round;
    TranscriptRound rec;
    rec.round = round;
    Matrix rows;
    int declared;
    if (round == 1) {
      declared = cloud.initial_level();
      rows = edge.initial_rows(declared);
      rec.from_level = 1;
      rec.to_level = declared;
    } else {
      declared = cloud.level() + 1;
      rows = edge.chunk(declared);
      rec.from_level = declared;
      rec.to_level = declared;
    }
    const ChunkPayload payload =
        make_chunk_payload(session_id, declared, rows, t.codec_checksum);
    const std::string body = payload.to_json();
    const std::string frame = frame_http_post("/v1/chunk", body);
    rec.body_bytes = body.size();
    rec.frame_bytes = frame.size();
    rec.modeled_delay_s = link_delay(frame.size(), link);

    // full wire round trip: parse the frame back and hand it to the cloud
    const HttpRequest req = parse_http_request(frame);
    const ChunkPayload parsed = ChunkPayload::from_json(req.body);
    const CloudReply reply =
        cloud.handle_rows(chunk_payload_matrix(parsed), parsed.level, parsed.checksum);
    const std::string reply_frame = frame_http_response(200, "OK", reply.to_json());
    const CloudReply round_reply = CloudReply::from_json(parse_http_response(reply_frame).body);

    rec.quality = round_reply.quality;
    rec.status = round_reply.status;
    t.total_frame_bytes += rec.frame_bytes;
    rec.cumulative_frame_bytes = t.total_frame_bytes;
    t.total_modeled_delay_s += rec.modeled_delay_s;
    t.rounds.push_back(rec);

    if (round_reply.status == "ok") {
      t.terminal_level = round_reply.level;
      if (round_reply.output) t.final_output = *round_reply.output;
      break;
    }
    if (round > k + 1) throw ProtocolError("run_session: loop did not terminate");
  }
  t.quality_history = cloud.quality_history();
  t.terminate_reason =
      cloud.reason() == TerminateReason::quality_met ? "quality_met" : "max_level";
  t.edge_encode_calls = edge.encode_calls();
  return t;
}

inline Transcript run_session(const Codec& codec, const LinkModel& link, const Matrix& z,
                              double eps, int initial_level,
                              const std::string& session_id = "local-1") {
  EdgeSession edge(codec);
  CloudSessionCore cloud(codec, eps, initial_level);
  return run_session(edge, cloud, codec, link, z, session_id);
}

}  // namespace prolat
