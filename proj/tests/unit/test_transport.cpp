#include <catch2/catch_amalgamated.hpp>

#include "prolat/base64.hpp"
#include "prolat/http.hpp"
#include "prolat/link.hpp"
#include "prolat/rng.hpp"
#include "prolat/wire.hpp"

using namespace prolat;

TEST_CASE("base64 round trips arbitrary byte strings") {
  Rng rng(1);
  for (int len = 0; len <= 50; ++len) {
    std::string raw;
    for (int i = 0; i < len; ++i)
      raw.push_back(static_cast<char>(rng.uniform_int(0, 255)));
    const std::string enc = base64_encode(raw);
    CHECK(enc.size() == (static_cast<std::size_t>(len) + 2) / 3 * 4);
    CHECK(base64_decode(enc) == raw);
  }
}

TEST_CASE("base64 decoding is strict") {
  CHECK(base64_decode("") == "");
  CHECK(base64_decode("AQ==") == std::string(1, '\x01'));
  CHECK_THROWS_AS(base64_decode("abc"), SerializationError);      // bad length
  CHECK_THROWS_AS(base64_decode("ab=c"), SerializationError);     // data after pad
  CHECK_THROWS_AS(base64_decode("a==="), SerializationError);     // misplaced pad
  CHECK_THROWS_AS(base64_decode("ab!d"), SerializationError);     // bad character
  CHECK_THROWS_AS(base64_decode("AB=="), SerializationError);     // non-canonical bits
  CHECK_THROWS_AS(base64_decode("AAB="), SerializationError);     // non-canonical bits
  CHECK_THROWS_AS(base64_decode("AQ==AQ=="), SerializationError); // pad mid-stream
}

TEST_CASE("full-latent payload matches the published size arithmetic") {
  // 64 x 576 float32 latent: raw 147,456 bytes, base64 exactly 196,608
  // characters (192 KiB); the paper reports the whole JSON payload as
  // 192.3 KiB, so the data field must sit within 0.5% of that.
  Matrix z(64, 576);
  for (std::size_t i = 0; i < z.size(); ++i) z.data[i] = 0.001 * static_cast<double>(i % 997);
  const ChunkPayload p = make_chunk_payload("s1", 4, z, "0123456789abcdef");
  CHECK(p.data.size() == 196608);
  const double total_kib = 192.3 * 1024.0;
  CHECK(std::fabs(static_cast<double>(p.data.size()) - total_kib) / total_kib < 0.005);
  // and the full payload overshoots the data field only by framing
  CHECK(p.to_json().size() > p.data.size());
  CHECK(p.to_json().size() < p.data.size() + 256);
}

TEST_CASE("raw image payload matches the published size arithmetic") {
  // 512 x 512 x 3 uint8 image: base64 exactly 1,048,576 characters
  // (1024 KiB) against the paper's 1024.3-KiB payload.
  std::string raw(static_cast<std::size_t>(512) * 512 * 3, '\0');
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<char>(i * 31 % 256);
  const ChunkPayload p = make_bytes_payload("s1", raw, 512, 512 * 3, "deadbeefdeadbeef");
  CHECK(p.data.size() == 1048576);
}

TEST_CASE("payload serialization is canonical and round trips") {
  Rng rng(7);
  Matrix chunk = random_gaussian(4, 6, rng);
  const ChunkPayload p = make_chunk_payload("s42", 2, chunk, "feedfacefeedface");
  const std::string json = p.to_json();

  // canonical field order
  CHECK(json.find("\"session_id\"") < json.find("\"level\""));
  CHECK(json.find("\"level\"") < json.find("\"dtype\""));
  CHECK(json.find("\"dtype\"") < json.find("\"shape\""));
  CHECK(json.find("\"shape\"") < json.find("\"checksum\""));
  CHECK(json.find("\"checksum\"") < json.find("\"data\""));

  // deterministic bytes
  CHECK(make_chunk_payload("s42", 2, chunk, "feedfacefeedface").to_json() == json);

  const ChunkPayload q = ChunkPayload::from_json(json);
  CHECK(q.session_id == "s42");
  CHECK(q.level == 2);
  CHECK(q.rows == 4);
  CHECK(q.cols == 6);
  const Matrix back = chunk_payload_matrix(q);
  for (std::size_t i = 0; i < chunk.size(); ++i)
    CHECK(back.data[i] == static_cast<double>(static_cast<float>(chunk.data[i])));
}

TEST_CASE("payload rejects non-finite values and shape mismatches") {
  Matrix bad(1, 2);
  bad.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(make_chunk_payload("s", 1, bad, "c"), SerializationError);

  Rng rng(9);
  ChunkPayload p = make_chunk_payload("s", 1, random_gaussian(2, 2, rng), "c");
  p.rows = 3;  // shape no longer matches the body
  CHECK_THROWS_AS(chunk_payload_matrix(p), SerializationError);
}

TEST_CASE("http framing round trips and counts bytes exactly") {
  SECTION("empty body") {
    const std::string frame = frame_http_post("/v1/chunk", "");
    const HttpRequest req = parse_http_request(frame);
    CHECK(req.method == "POST");
    CHECK(req.path == "/v1/chunk");
    CHECK(req.body.empty());
    CHECK(req.headers.at("content-length") == "0");
  }

  SECTION("body with embedded CRLF survives length-based framing") {
    const std::string body = "line1\r\nline2\r\n\r\nline3";
    const HttpRequest req = parse_http_request(frame_http_post("/x", body));
    CHECK(req.body == body);
  }

  SECTION("frame size is header plus body") {
    std::string body(196608, 'A');
    const std::string frame = frame_http_post("/v1/chunk", body);
    const std::size_t header_len = frame.size() - body.size();
    CHECK(frame.substr(header_len) == body);
    CHECK(header_len ==
          std::string("POST /v1/chunk HTTP/1.1\r\nHost: edge\r\nContent-Type: application/json\r\n"
                      "Content-Length: 196608\r\n\r\n")
              .size());
  }

  SECTION("unknown headers are tolerated") {
    const std::string raw =
        "POST /a HTTP/1.1\r\nHost: h\r\nX-Custom: v\r\nContent-Length: 2\r\n\r\nhi";
    const HttpRequest req = parse_http_request(raw);
    CHECK(req.body == "hi");
    CHECK(req.headers.at("x-custom") == "v");
  }

  SECTION("POST without Content-Length is rejected") {
    CHECK_THROWS_AS(parse_http_request("POST /a HTTP/1.1\r\nHost: h\r\n\r\nbody"),
                    ProtocolError);
  }

  SECTION("malformed framing is rejected") {
    CHECK_THROWS_AS(parse_http_request("garbage"), ProtocolError);
    CHECK_THROWS_AS(parse_http_request("POST /a HTTP/1.1\r\nNoColon\r\n\r\n"), ProtocolError);
    CHECK_THROWS_AS(parse_http_request("POST /a HTTP/1.1\r\nContent-Length: 5\r\n\r\nab"),
                    ProtocolError);
  }

  SECTION("responses round trip") {
    const HttpResponse res = parse_http_response(frame_http_response(200, "OK", "{\"a\":1}"));
    CHECK(res.status == 200);
    CHECK(res.body == "{\"a\":1}");
    CHECK_THROWS_AS(parse_http_response("HTTP/1.1 200 OK\r\n\r\n"), ProtocolError);
  }
}

TEST_CASE("link delay reproduces the published arithmetic") {
  SECTION("1024.3 KiB at 1 Mbps") {
    // with burst credit and no overhead: 8.359 s (Table I shaping)
    const LinkModel tc{1e6, 32000.0, 0.2, 0.0};
    CHECK(link_delay(1048883, tc) == Catch::Approx(8.359).epsilon(1e-3));
    // without burst: within 0.1% of the ~8395 ms theoretical bound
    const double plain = 8.0 * 1048883.2 / 1e6;
    CHECK(std::fabs(plain - 8.395) / 8.395 < 0.001);
  }

  SECTION("192.3 KiB at 1 Mbps with default overhead lands near 1617.7 ms") {
    const LinkModel def{};  // defaults: 1 Mbps, 32 kbit burst, 40 ms overhead
    const double d = link_delay(196915, def);
    CHECK(std::fabs(d - 1.6177) / 1.6177 < 0.03);
  }

  SECTION("zero bytes cost only the fixed overhead") {
    const LinkModel def{};
    CHECK(link_delay(0, def) == Catch::Approx(0.040));
  }

  SECTION("delay is non-decreasing in size and linear beyond the burst") {
    const LinkModel def{};
    std::size_t prev_bytes = 0;
    double prev = link_delay(0, def);
    for (std::size_t bytes : {100u, 4000u, 10000u, 50000u, 200000u}) {
      const double d = link_delay(bytes, def);
      CHECK(d >= prev);
      prev = d;
      prev_bytes = bytes;
    }
    (void)prev_bytes;
    const double d1 = link_delay(100000, def);
    const double d2 = link_delay(200000, def);
    CHECK(d2 - d1 == Catch::Approx(8.0 * 100000 / 1e6).epsilon(1e-12));
  }

  SECTION("invalid models are rejected") {
    CHECK_THROWS_AS(link_delay(10, LinkModel{0.0, 0.0, 0.0, 0.0}), ConfigError);
  }
}

TEST_CASE("loopback link echoes bytes and models delay additively") {
  const LinkModel model{1e6, 0.0, 0.2, 0.01};
  Link link = Link::loopback(model, [](const std::string& s) { return s; });
  Rng rng(3);
  std::string payload;
  for (int i = 0; i < 5000; ++i) payload.push_back(static_cast<char>(rng.uniform_int(0, 255)));
  const SendResult res = link.send(payload);
  CHECK(res.reply == payload);
  CHECK(res.modeled_delay_s == Catch::Approx(8.0 * 5000 / 1e6 + 0.01));

  const SendResult res2 = link.send(payload);
  CHECK(res.modeled_delay_s + res2.modeled_delay_s ==
        Catch::Approx(2.0 * (8.0 * 5000 / 1e6 + 0.01)));
}
