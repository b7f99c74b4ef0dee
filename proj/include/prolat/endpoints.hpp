#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "prolat/control.hpp"

namespace prolat {

// ---- task decoder stub ----

// Stands in for the downstream LLM decoder. echo_stats digests the
// reconstructed latent deterministically; fixed_latency additionally
// simulates decode time (sleeping only in realtime mode).
struct TaskDecoderStub {
  enum class Mode { echo_stats, fixed_latency };

  Mode mode = Mode::echo_stats;
  double latency_ms = 490.0;
  bool realtime = false;

  static Mode parse_mode(const std::string& name) {
    if (name == "echo_stats") return Mode::echo_stats;
    if (name == "fixed_latency") return Mode::fixed_latency;
    throw ConfigError("unknown stub mode: " + name);
  }

  std::string run(const Matrix& z_hat) const {
    if (mode == Mode::fixed_latency && realtime)
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(latency_ms));
    // per-quarter token-block mean/variance digest
    std::string out = "stats";
    const int blocks = std::min(4, z_hat.rows);
    const auto bounds = make_boundaries(z_hat.rows, blocks);
    int lo = 0;
    for (int b = 0; b < blocks; ++b) {
      const int hi = bounds[static_cast<std::size_t>(b)];
      double mean = 0.0, var = 0.0;
      const std::size_t n = static_cast<std::size_t>(hi - lo) * z_hat.cols;
      for (int t = lo; t < hi; ++t)
        for (int j = 0; j < z_hat.cols; ++j) mean += z_hat.at(t, j);
      mean /= static_cast<double>(n);
      for (int t = lo; t < hi; ++t)
        for (int j = 0; j < z_hat.cols; ++j) {
          const double d = z_hat.at(t, j) - mean;
          var += d * d;
        }
      var /= static_cast<double>(n);
      char buf[64];
      std::snprintf(buf, sizeof(buf), " b%d:m=%.6f,v=%.6f", b, mean, var);
      out += buf;
    }
    return out;
  }
};

// ---- shared service configuration ----

struct ServiceConfig {
  double epsilon = 0.9;
  int initial_level = 1;
  LinkModel link;
  std::string checkpoint;
  std::string stub_mode = "echo_stats";
  double stub_latency_ms = 490.0;
  bool realtime = false;
  std::size_t session_capacity = 1024;
  double session_ttl_s = 60.0;
};

// Plain key=value config files; '#' starts a comment.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (!key.empty()) out[key] = val;
  }
  return out;
}

inline void apply_config(ServiceConfig& cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, val] : kv) {
    try {
      if (key == "epsilon") cfg.epsilon = std::stod(val);
      else if (key == "initial_level") cfg.initial_level = std::stoi(val);
      else if (key == "rate_bps") cfg.link.rate_bps = std::stod(val);
      else if (key == "burst_bits") cfg.link.burst_bits = std::stod(val);
      else if (key == "overhead_ms") cfg.link.fixed_overhead_s = std::stod(val) / 1e3;
      else if (key == "checkpoint") cfg.checkpoint = val;
      else if (key == "stub_mode") cfg.stub_mode = val;
      else if (key == "stub_latency_ms") cfg.stub_latency_ms = std::stod(val);
      else throw ConfigError("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad value for config key " + key + ": " + val);
    }
  }
}

inline ServiceConfig load_service_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ServiceConfig cfg;
  apply_config(cfg, parse_config_text(text));
  return cfg;
}

// ---- cloud service ----

// Holds per-session cloud state keyed by session id. Expired sessions are
// dropped lazily; at capacity the least recently used session is evicted and
// its owner sees a protocol error on its next request.
class SessionStore {
 public:
  SessionStore(std::size_t capacity, double ttl_s) : capacity_(capacity), ttl_s_(ttl_s) {}

  std::string create(const Codec& codec, double epsilon, int initial_level,
                     CloudSessionCore::TaskFn task) {
    std::lock_guard<std::mutex> lock(mu_);
    purge_expired_();
    if (sessions_.size() >= capacity_) evict_oldest_();
    const std::string id = "s" + std::to_string(++next_id_);
    sessions_.emplace(id, Entry{CloudSessionCore(codec, epsilon, initial_level, std::move(task)),
                                std::chrono::steady_clock::now()});
    return id;
  }

  // Runs fn under the store lock with the session, keeping the single-writer
  // rule per session id trivially true.
  template <typename Fn>
  auto with_session(const std::string& id, Fn&& fn) {
    std::lock_guard<std::mutex> lock(mu_);
    purge_expired_();
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ProtocolError("unknown or expired session: " + id);
    it->second.last_access = std::chrono::steady_clock::now();
    return fn(it->second.core);
  }

  std::size_t size() {
    std::lock_guard<std::mutex> lock(mu_);
    return sessions_.size();
  }

 private:
  struct Entry {
    CloudSessionCore core;
    std::chrono::steady_clock::time_point last_access;
  };

  void purge_expired_() {
    const auto now = std::chrono::steady_clock::now();
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      const double age = std::chrono::duration<double>(now - it->second.last_access).count();
      if (age > ttl_s_) it = sessions_.erase(it);
      else ++it;
    }
  }

  void evict_oldest_() {
    auto oldest = sessions_.begin();
    for (auto it = sessions_.begin(); it != sessions_.end(); ++it)
      if (it->second.last_access < oldest->second.last_access) oldest = it;
    if (oldest != sessions_.end()) sessions_.erase(oldest);
  }

  std::size_t capacity_;
  double ttl_s_;
  std::map<std::string, Entry> sessions_;
  std::mutex mu_;
  std::uint64_t next_id_ = 0;
};

// The cloud endpoint: decodes accumulated chunks, applies the quality
// threshold, and replies ok / need_more. Usable in-process through
// handle_http (loopback link handler) or as a real TCP service.
class CloudService {
 public:
  CloudService(const Codec& codec, ServiceConfig cfg)
      : codec_(codec),
        cfg_(cfg),
        store_(cfg.session_capacity, cfg.session_ttl_s) {
    stub_.mode = TaskDecoderStub::parse_mode(cfg_.stub_mode);
    stub_.latency_ms = cfg_.stub_latency_ms;
    stub_.realtime = cfg_.realtime;
  }

  const Codec& codec() const { return codec_; }
  const ServiceConfig& config() const { return cfg_; }

  HttpResponse handle(const HttpRequest& req) {
    try {
      if (req.method == "POST" && req.path == "/v1/session") return open_session_(req);
      if (req.method == "POST" && req.path == "/v1/chunk") return handle_chunk_(req);
      if (req.method == "GET" && req.path == "/v1/health") return health_();
      return error_(404, "Not Found", "no such endpoint: " + req.path);
    } catch (const ProtocolError& e) {
      return error_(400, "Bad Request", e.what());
    } catch (const SerializationError& e) {
      return error_(400, "Bad Request", e.what());
    } catch (const std::exception& e) {
      return error_(500, "Internal Server Error", e.what());
    }
  }

  // Raw-bytes entry point: exactly what a socket connection delivers, and
  // what a loopback Link hands over.
  std::string handle_http(const std::string& request_bytes) {
    HttpRequest req;
    try {
      req = parse_http_request(request_bytes);
    } catch (const ProtocolError& e) {
      return frame_http_response(400, "Bad Request", WireError{e.what()}.to_json());
    }
    const HttpResponse res = handle(req);
    return frame_http_response(res.status, res.reason, res.body);
  }

  Link::Handler loopback_handler() {
    return [this](const std::string& bytes) { return handle_http(bytes); };
  }

  // ---- TCP mode ----

  // Binds and serves until stop(); port 0 picks an ephemeral port.
  void start(const std::string& addr, int port) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket() failed");
    const int one = 1;
    setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(static_cast<std::uint16_t>(port));
    if (inet_pton(AF_INET, addr.c_str(), &sa.sin_addr) != 1)
      throw TransportError("bad listen address: " + addr);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0)
      throw TransportError("bind to " + addr + ":" + std::to_string(port) + " failed");
    if (::listen(listen_fd_, 16) != 0) throw TransportError("listen failed");
    socklen_t len = sizeof(sa);
    getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    bound_port_ = ntohs(sa.sin_port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop_(); });
  }

  void stop() {
    if (!running_) return;
    running_ = false;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::lock_guard<std::mutex> lock(workers_mu_);
    for (auto& w : workers_)
      if (w.joinable()) w.join();
    workers_.clear();
  }

  int port() const { return bound_port_; }

  ~CloudService() { stop(); }

 private:
  HttpResponse open_session_(const HttpRequest& req) {
    const SessionOpenRequest open = SessionOpenRequest::from_json(req.body);
    if (open.checksum != codec_.checksum())
      return error_(400, "Bad Request",
                    "codec checksum mismatch: edge " + open.checksum + " cloud " +
                        codec_.checksum());
    TaskDecoderStub stub = stub_;
    const std::string id = store_.create(codec_, cfg_.epsilon, cfg_.initial_level,
                                         [stub](const Matrix& z) { return stub.run(z); });
    SessionOpenReply reply;
    reply.session_id = id;
    reply.epsilon = cfg_.epsilon;
    reply.initial_level = cfg_.initial_level;
    reply.k_levels = codec_.levels();
    reply.n_tokens = codec_.token_count();
    reply.d_model = codec_.token_dim();
    return json_(200, reply.to_json());
  }

  HttpResponse handle_chunk_(const HttpRequest& req) {
    const ChunkPayload payload = ChunkPayload::from_json(req.body);
    const Matrix rows = chunk_payload_matrix(payload);
    const CloudReply reply = store_.with_session(
        payload.session_id, [&](CloudSessionCore& core) {
          return core.handle_rows(rows, payload.level, payload.checksum);
        });
    return json_(200, reply.to_json());
  }

  HttpResponse health_() {
    nlohmann::ordered_json j;
    j["status"] = "ok";
    j["codec"] = codec_.kind();
    j["checksum"] = codec_.checksum();
    j["k_levels"] = codec_.levels();
    j["epsilon"] = cfg_.epsilon;
    j["initial_level"] = cfg_.initial_level;
    return json_(200, j.dump());
  }

  static HttpResponse json_(int status, const std::string& body) {
    HttpResponse r;
    r.status = status;
    r.reason = status == 200 ? "OK" : "Error";
    r.body = body;
    return r;
  }

  static HttpResponse error_(int status, const std::string& reason, const std::string& msg) {
    HttpResponse r;
    r.status = status;
    r.reason = reason;
    r.body = WireError{msg}.to_json();
    return r;
  }

  void accept_loop_() {
    while (running_) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (!running_) break;
        continue;
      }
      std::lock_guard<std::mutex> lock(workers_mu_);
      workers_.emplace_back([this, fd] { serve_connection_(fd); });
    }
  }

  void serve_connection_(int fd) {
    timeval tv{};
    tv.tv_sec = 30;
    setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    std::string request;
    char buf[16384];
    // read headers, then the declared body length
    std::size_t body_needed = std::string::npos;
    std::size_t header_end = std::string::npos;
    for (;;) {
      if (header_end != std::string::npos &&
          request.size() >= header_end + (body_needed == std::string::npos ? 0 : body_needed))
        break;
      const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
      if (n <= 0) break;
      request.append(buf, static_cast<std::size_t>(n));
      if (header_end == std::string::npos) {
        const std::size_t pos = request.find("\r\n\r\n");
        if (pos != std::string::npos) {
          header_end = pos + 4;
          body_needed = 0;
          const std::size_t cl = detail::lower(request).find("content-length:");
          if (cl != std::string::npos && cl < pos) {
            const std::size_t eol = request.find("\r\n", cl);
            try {
              body_needed = static_cast<std::size_t>(
                  std::stoull(detail::trim(request.substr(cl + 15, eol - cl - 15))));
            } catch (...) {
              body_needed = 0;
            }
          }
        }
      }
    }
    const std::string reply = request.empty()
                                  ? frame_http_response(400, "Bad Request",
                                                        WireError{"empty request"}.to_json())
                                  : handle_http(request);
    std::size_t off = 0;
    while (off < reply.size()) {
      const ssize_t n = ::send(fd, reply.data() + off, reply.size() - off, 0);
      if (n <= 0) break;
      off += static_cast<std::size_t>(n);
    }
    ::close(fd);
  }

  const Codec& codec_;
  ServiceConfig cfg_;
  TaskDecoderStub stub_;
  SessionStore store_;
  int listen_fd_ = -1;
  int bound_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

// ---- edge agent ----

// Drives one full transmission session against a cloud service reachable
// through the given link (loopback handler or TCP). The encoder runs exactly
// once per session; later rounds are served from the cached representation.
class EdgeAgent {
 public:
  explicit EdgeAgent(const Codec& codec) : codec_(codec) {}

  Transcript run_session(const Link& link, const Matrix& z) {
    // open
    const SessionOpenRequest open{codec_.checksum()};
    const SendResult open_res =
        link.send(frame_http_post("/v1/session", open.to_json()));
    const HttpResponse open_http = parse_http_response(open_res.reply);
    if (open_http.status != 200)
      throw ProtocolError("session open rejected: " + open_http.body);
    const SessionOpenReply session = SessionOpenReply::from_json(open_http.body);
    if (session.k_levels != codec_.levels() || session.n_tokens != codec_.token_count() ||
        session.d_model != codec_.token_dim())
      throw ProtocolError("session shape mismatch with cloud");

    Transcript t;
    t.session_id = session.session_id;
    t.codec_checksum = codec_.checksum();
    t.epsilon = session.epsilon;
    t.initial_level = session.initial_level;

    EdgeSession edge(codec_);
    edge.open(z);
    int round = 0;
    int next_declared = session.initial_level;
    for (;;) {
      ++round;
      TranscriptRound rec;
      rec.round = round;
      Matrix rows;
      if (round == 1) {
        rows = edge.initial_rows(next_declared);
        rec.from_level = 1;
      } else {
        rows = edge.chunk(next_declared);
        rec.from_level = next_declared;
      }
      rec.to_level = next_declared;
      const ChunkPayload payload =
          make_chunk_payload(session.session_id, next_declared, rows, t.codec_checksum);
      const std::string body = payload.to_json();
      const std::string frame = frame_http_post("/v1/chunk", body);
      rec.body_bytes = body.size();
      rec.frame_bytes = frame.size();

      const SendResult res = link.send(frame);
      rec.modeled_delay_s = res.modeled_delay_s;
      rec.wall_delay_s = res.wall_delay_s;
      const HttpResponse http = parse_http_response(res.reply);
      if (http.status != 200) throw ProtocolError("chunk rejected: " + http.body);
      const CloudReply reply = CloudReply::from_json(http.body);

      rec.quality = reply.quality;
      rec.status = reply.status;
      t.total_frame_bytes += rec.frame_bytes;
      rec.cumulative_frame_bytes = t.total_frame_bytes;
      t.total_modeled_delay_s += rec.modeled_delay_s;
      t.total_wall_delay_s += rec.wall_delay_s;
      t.quality_history.push_back(reply.quality);
      t.rounds.push_back(rec);

      if (reply.status == "ok") {
        t.terminal_level = reply.level;
        t.terminate_reason = reply.level >= codec_.levels() && reply.quality < session.epsilon
                                 ? "max_level"
                                 : "quality_met";
        if (reply.output) t.final_output = *reply.output;
        break;
      }
      if (reply.requested_level != reply.level + 1)
        throw ProtocolError("cloud requested non-sequential level " +
                            std::to_string(reply.requested_level));
      next_declared = reply.requested_level;
      if (round > codec_.levels() + 1) throw ProtocolError("session did not terminate");
    }
    t.edge_encode_calls = edge.encode_calls();
    return t;
  }

 private:
  const Codec& codec_;
};

}  // namespace prolat
