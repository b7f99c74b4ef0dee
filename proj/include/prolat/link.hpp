#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <thread>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "prolat/error.hpp"

namespace prolat {

// Deterministic token-bucket link. `queue_latency_cap` mirrors the shaper's
// queue-time cap; it bounds queuing inside the emulated shaper and is not an
// added delay. `fixed_overhead` absorbs per-message costs (handshake,
// framing, scheduling) and defaults to 40 ms.
struct LinkModel {
  double rate_bps = 1e6;
  double burst_bits = 32000.0;
  double queue_latency_cap_s = 0.2;
  double fixed_overhead_s = 0.040;

  void validate() const {
    if (rate_bps <= 0) throw ConfigError("LinkModel: rate must be positive");
    if (burst_bits < 0) throw ConfigError("LinkModel: burst must be non-negative");
  }
};

// Transfer delay of one message: bits beyond the burst credit drain at the
// token rate, plus the fixed per-message overhead.
inline double link_delay(std::size_t total_bytes, const LinkModel& link) {
  link.validate();
  const double bits = 8.0 * static_cast<double>(total_bytes);
  return std::max(0.0, (bits - link.burst_bits) / link.rate_bps) + link.fixed_overhead_s;
}

struct SendResult {
  std::string reply;        // raw response bytes
  std::size_t sent_bytes = 0;
  double modeled_delay_s = 0.0;
  double wall_delay_s = 0.0;
};

// One round trip over the emulated link. Loopback mode hands the request to
// an in-process handler and records the modeled delay (sleeping only when
// realtime is set); socket mode performs a real TCP exchange and records the
// wall-clock delay alongside the modeled one.
class Link {
 public:
  using Handler = std::function<std::string(const std::string&)>;

  static Link loopback(LinkModel model, Handler handler, bool realtime = false) {
    Link l;
    l.model_ = model;
    l.handler_ = std::move(handler);
    l.realtime_ = realtime;
    return l;
  }

  static Link socket(LinkModel model, std::string host, int port) {
    Link l;
    l.model_ = model;
    l.host_ = std::move(host);
    l.port_ = port;
    return l;
  }

  const LinkModel& model() const { return model_; }

  SendResult send(const std::string& request) const {
    SendResult res;
    res.sent_bytes = request.size();
    res.modeled_delay_s = link_delay(request.size(), model_);
    const auto t0 = std::chrono::steady_clock::now();
    if (handler_) {
      if (realtime_)
        std::this_thread::sleep_for(std::chrono::duration<double>(res.modeled_delay_s));
      res.reply = handler_(request);
    } else {
      res.reply = socket_round_trip_(request);
    }
    res.wall_delay_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

 private:
  std::string socket_round_trip_(const std::string& request) const {
    int attempts = 0;
    for (;;) {
      try {
        return socket_once_(request);
      } catch (const TransportError&) {
        if (++attempts >= 3) throw;
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempts));
      }
    }
  }

  std::string socket_once_(const std::string& request) const {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket() failed");
    struct FdGuard {
      int fd;
      ~FdGuard() { ::close(fd); }
    } guard{fd};

    timeval tv{};
    tv.tv_sec = 30;
    setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port_));
    if (inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1)
      throw TransportError("bad address: " + host_);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw TransportError("connect to " + host_ + ":" + std::to_string(port_) + " failed");

    std::size_t off = 0;
    while (off < request.size()) {
      const ssize_t n = ::send(fd, request.data() + off, request.size() - off, 0);
      if (n <= 0) throw TransportError("send failed");
      off += static_cast<std::size_t>(n);
    }
    ::shutdown(fd, SHUT_WR);

    std::string reply;
    char buf[16384];
    for (;;) {
      const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
      if (n < 0) throw TransportError("recv failed");
      if (n == 0) break;
      reply.append(buf, static_cast<std::size_t>(n));
    }
    if (reply.empty()) throw TransportError("empty reply");
    return reply;
  }

  LinkModel model_;
  Handler handler_;
  bool realtime_ = false;
  std::string host_;
  int port_ = 0;
};

}  // namespace prolat
