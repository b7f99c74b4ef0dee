#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "prolat/base64.hpp"
#include "prolat/bytes.hpp"
#include "prolat/matrix.hpp"

namespace prolat {

// JSON wire schema between edge and cloud. Field order is canonical
// (session_id, level, dtype, shape, checksum, data) and serialization is
// deterministic, so payload bytes are reproducible and checksummable.

struct ChunkPayload {
  std::string session_id;
  int level = 0;
  std::string dtype;  // "f32" or "u8"
  int rows = 0;
  int cols = 0;
  std::string checksum;  // codec checksum, hex digest
  std::string data;      // base64 of the raw little-endian body

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["session_id"] = session_id;
    j["level"] = level;
    j["dtype"] = dtype;
    j["shape"] = {rows, cols};
    j["checksum"] = checksum;
    j["data"] = data;
    return j.dump();
  }

  static ChunkPayload from_json(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw SerializationError(std::string("chunk payload: bad JSON: ") + e.what());
    }
    ChunkPayload p;
    try {
      p.session_id = j.at("session_id").get<std::string>();
      p.level = j.at("level").get<int>();
      p.dtype = j.at("dtype").get<std::string>();
      p.rows = j.at("shape").at(0).get<int>();
      p.cols = j.at("shape").at(1).get<int>();
      p.checksum = j.at("checksum").get<std::string>();
      p.data = j.at("data").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw SerializationError(std::string("chunk payload: missing field: ") + e.what());
    }
    return p;
  }
};

// Converts 64-bit compute values to the 32-bit wire format, rounding once.
inline std::string f32_bytes(const Matrix& m) {
  std::string raw;
  raw.reserve(m.size() * 4);
  for (double v : m.data) {
    if (!std::isfinite(v)) throw SerializationError("payload contains non-finite value");
    put_f32(raw, static_cast<float>(v));
  }
  return raw;
}

inline Matrix matrix_from_f32(const std::string& raw, int rows, int cols) {
  if (raw.size() != static_cast<std::size_t>(rows) * cols * 4)
    throw SerializationError("payload byte count does not match shape");
  Matrix m(rows, cols);
  ByteReader r(raw, "f32 body");
  for (double& v : m.data) v = static_cast<double>(r.f32());
  return m;
}

// Chunk rows as a wire payload: f32 little-endian body, base64 data field.
inline ChunkPayload make_chunk_payload(const std::string& session_id, int level,
                                       const Matrix& chunk_rows,
                                       const std::string& codec_checksum) {
  if (chunk_rows.rows == 0) throw SerializationError("empty chunk payload");
  ChunkPayload p;
  p.session_id = session_id;
  p.level = level;
  p.dtype = "f32";
  p.rows = chunk_rows.rows;
  p.cols = chunk_rows.cols;
  p.checksum = codec_checksum;
  p.data = base64_encode(f32_bytes(chunk_rows));
  return p;
}

// Raw byte payload (e.g. the u8 image body of the full-cloud baseline).
inline ChunkPayload make_bytes_payload(const std::string& session_id,
                                       const std::string& raw, int rows, int cols,
                                       const std::string& checksum) {
  if (raw.size() != static_cast<std::size_t>(rows) * cols)
    throw SerializationError("u8 payload byte count does not match shape");
  ChunkPayload p;
  p.session_id = session_id;
  p.level = 0;
  p.dtype = "u8";
  p.rows = rows;
  p.cols = cols;
  p.checksum = checksum;
  p.data = base64_encode(raw);
  return p;
}

inline Matrix chunk_payload_matrix(const ChunkPayload& p) {
  if (p.dtype != "f32") throw SerializationError("expected f32 payload, got " + p.dtype);
  return matrix_from_f32(base64_decode(p.data), p.rows, p.cols);
}

struct CloudReply {
  std::string status;  // "ok" or "need_more"
  double quality = 0.0;
  int level = 0;
  int requested_level = 0;     // set when status == "need_more"
  std::optional<std::string> output;  // present when status == "ok"

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["status"] = status;
    j["quality"] = quality;
    j["level"] = level;
    if (status == "need_more") j["requested_level"] = requested_level;
    if (output) j["output"] = *output;
    return j.dump();
  }

  static CloudReply from_json(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw SerializationError(std::string("cloud reply: bad JSON: ") + e.what());
    }
    CloudReply r;
    try {
      r.status = j.at("status").get<std::string>();
      r.quality = j.at("quality").get<double>();
      r.level = j.at("level").get<int>();
      if (j.contains("requested_level")) r.requested_level = j.at("requested_level").get<int>();
      if (j.contains("output")) r.output = j.at("output").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw SerializationError(std::string("cloud reply: missing field: ") + e.what());
    }
    return r;
  }
};

struct SessionOpenRequest {
  std::string checksum;

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["checksum"] = checksum;
    return j.dump();
  }

  static SessionOpenRequest from_json(const std::string& text) {
    try {
      nlohmann::json j = nlohmann::json::parse(text);
      SessionOpenRequest r;
      r.checksum = j.at("checksum").get<std::string>();
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw SerializationError(std::string("session open: ") + e.what());
    }
  }
};

struct SessionOpenReply {
  std::string session_id;
  double epsilon = 0.0;
  int initial_level = 1;
  int k_levels = 0;
  int n_tokens = 0;
  int d_model = 0;

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["session_id"] = session_id;
    j["epsilon"] = epsilon;
    j["initial_level"] = initial_level;
    j["k_levels"] = k_levels;
    j["n_tokens"] = n_tokens;
    j["d_model"] = d_model;
    return j.dump();
  }

  static SessionOpenReply from_json(const std::string& text) {
    try {
      nlohmann::json j = nlohmann::json::parse(text);
      SessionOpenReply r;
      r.session_id = j.at("session_id").get<std::string>();
      r.epsilon = j.at("epsilon").get<double>();
      r.initial_level = j.at("initial_level").get<int>();
      r.k_levels = j.at("k_levels").get<int>();
      r.n_tokens = j.at("n_tokens").get<int>();
      r.d_model = j.at("d_model").get<int>();
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw SerializationError(std::string("session open reply: ") + e.what());
    }
  }
};

struct WireError {
  std::string message;

  std::string to_json() const {
    nlohmann::ordered_json j;
    j["error"] = message;
    return j.dump();
  }
};

}  // namespace prolat
