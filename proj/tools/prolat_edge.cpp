// Edge agent binary: reads latent samples from a dataset file (the frozen
// vision encoder's output tap), opens a session against the cloud service
// and streams chunks until the cloud is satisfied.

#include <cstdio>

#include <CLI11.hpp>

#include "prolat/bench.hpp"
#include "prolat/codec_io.hpp"
#include "prolat/endpoints.hpp"

using namespace prolat;

int main(int argc, char** argv) {
  CLI::App app{"progressive latent transmission: edge agent"};

  std::string connect = "127.0.0.1:8089";
  std::string checkpoint;
  std::string dataset_path;
  int sample = 0;
  int count = 1;
  double rate_bps = 1e6, burst_bits = 32000.0, overhead_ms = 40.0;
  bool print_rounds = false;
  app.add_option("--connect", connect, "cloud address:port");
  app.add_option("--checkpoint", checkpoint, "codec checkpoint path")->required();
  app.add_option("--dataset", dataset_path, "latent dataset file")->required();
  app.add_option("--sample", sample, "first sample index");
  app.add_option("--count", count, "number of consecutive samples to send");
  app.add_option("--rate-bps", rate_bps, "link rate in bits/second");
  app.add_option("--burst-bits", burst_bits, "token bucket burst in bits");
  app.add_option("--overhead-ms", overhead_ms, "fixed per-message overhead (ms)");
  app.add_flag("--rounds", print_rounds, "print the per-round transcript CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::size_t colon = connect.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--connect must be address:port");
    const std::string addr = connect.substr(0, colon);
    const int port = std::stoi(connect.substr(colon + 1));

    const auto codec = load_codec(checkpoint);
    const Dataset data = Dataset::load(dataset_path);
    if (sample < 0 || sample + count > data.count())
      throw ArgumentError("sample range out of bounds");

    const LinkModel model{rate_bps, burst_bits, 0.2, overhead_ms / 1e3};
    EdgeAgent agent(*codec);
    for (int i = sample; i < sample + count; ++i) {
      Link link = Link::socket(model, addr, port);
      const Transcript t =
          agent.run_session(link, data.samples[static_cast<std::size_t>(i)]);
      std::printf(
          "sample %d session %s: terminal level %d/%d (%s), q %.4f, %zu bytes, "
          "modeled %.3f s, wall %.3f s\n",
          i, t.session_id.c_str(), t.terminal_level, codec->levels(),
          t.terminate_reason.c_str(),
          t.quality_history.empty() ? 0.0 : t.quality_history.back(), t.total_frame_bytes,
          t.total_modeled_delay_s, t.total_wall_delay_s);
      if (print_rounds) std::fputs(transcript_csv(t).c_str(), stdout);
      if (!t.final_output.empty()) std::printf("  output: %s\n", t.final_output.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
