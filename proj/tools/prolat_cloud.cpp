// Cloud service binary: loads a codec checkpoint and serves the session and
// chunk endpoints over TCP, applying the quality-threshold control rule.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <thread>

#include <CLI11.hpp>

#include "prolat/codec_io.hpp"
#include "prolat/endpoints.hpp"

using namespace prolat;

namespace {
std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"progressive latent transmission: cloud service"};

  std::string listen = "127.0.0.1:8089";
  std::string config_path;
  ServiceConfig cfg;
  double overhead_ms = 40.0;
  app.add_option("--listen", listen, "address:port to bind");
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--checkpoint", cfg.checkpoint, "codec checkpoint path");
  app.add_option("--epsilon", cfg.epsilon, "quality threshold");
  app.add_option("--initial-level", cfg.initial_level, "initial transmission level");
  app.add_option("--rate-bps", cfg.link.rate_bps, "link rate in bits/second");
  app.add_option("--burst-bits", cfg.link.burst_bits, "token bucket burst in bits");
  app.add_option("--overhead-ms", overhead_ms, "fixed per-message overhead (ms)");
  app.add_option("--stub-mode", cfg.stub_mode, "task stub: echo_stats | fixed_latency");
  app.add_option("--stub-latency-ms", cfg.stub_latency_ms, "fixed_latency stub decode time");
  app.add_flag("--realtime", cfg.realtime, "actually sleep simulated latencies");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      ServiceConfig from_file = load_service_config(config_path);
      // explicit flags win over the file
      from_file.realtime = cfg.realtime;
      cfg = from_file;
    }
    cfg.link.fixed_overhead_s = overhead_ms / 1e3;
    if (cfg.checkpoint.empty()) throw ConfigError("--checkpoint (or config file) required");

    const std::size_t colon = listen.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--listen must be address:port");
    const std::string addr = listen.substr(0, colon);
    const int port = std::stoi(listen.substr(colon + 1));

    const auto codec = load_codec(cfg.checkpoint);
    CloudService service(*codec, cfg);

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service.start(addr, port);
    std::printf("cloud service on %s:%d (codec %s, checksum %s, epsilon %.3f, l0 %d)\n",
                addr.c_str(), service.port(), codec->kind().c_str(),
                codec->checksum().c_str(), cfg.epsilon, cfg.initial_level);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    std::printf("stopped\n");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
