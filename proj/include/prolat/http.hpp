#pragma once

#include <algorithm>
#include <map>
#include <string>

#include "prolat/error.hpp"

namespace prolat {

// Minimal HTTP/1.1 subset: one request per connection, length-delimited
// bodies, no keep-alive, no chunked encoding. The parser tolerates unknown
// headers and rejects POST bodies without a Content-Length.

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> headers;  // lower-cased names
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string reason = "OK";
  std::map<std::string, std::string> headers;
  std::string body;
};

inline std::string frame_http_post(const std::string& path, const std::string& body,
                                   const std::string& host = "edge") {
  std::string out = "POST " + path + " HTTP/1.1\r\n";
  out += "Host: " + host + "\r\n";
  out += "Content-Type: application/json\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  out += "\r\n";
  out += body;
  return out;
}

inline std::string frame_http_get(const std::string& path, const std::string& host = "edge") {
  return "GET " + path + " HTTP/1.1\r\nHost: " + host + "\r\n\r\n";
}

inline std::string frame_http_response(int status, const std::string& reason,
                                       const std::string& body) {
  std::string out = "HTTP/1.1 " + std::to_string(status) + " " + reason + "\r\n";
  out += "Content-Type: application/json\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  out += "\r\n";
  out += body;
  return out;
}

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

// Shared header-block parsing; returns the offset of the body.
inline std::size_t parse_headers(const std::string& raw, std::size_t start,
                                 std::map<std::string, std::string>& headers) {
  std::size_t pos = start;
  while (true) {
    const std::size_t eol = raw.find("\r\n", pos);
    if (eol == std::string::npos) throw ProtocolError("http: unterminated header block");
    if (eol == pos) return eol + 2;  // blank line
    const std::string line = raw.substr(pos, eol - pos);
    const std::size_t colon = line.find(':');
    if (colon == std::string::npos) throw ProtocolError("http: malformed header line");
    headers[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
    pos = eol + 2;
  }
}

}  // namespace detail

inline HttpRequest parse_http_request(const std::string& raw) {
  HttpRequest req;
  const std::size_t eol = raw.find("\r\n");
  if (eol == std::string::npos) throw ProtocolError("http: missing request line");
  const std::string line = raw.substr(0, eol);
  const std::size_t sp1 = line.find(' ');
  const std::size_t sp2 = line.rfind(' ');
  if (sp1 == std::string::npos || sp2 == sp1) throw ProtocolError("http: malformed request line");
  req.method = line.substr(0, sp1);
  req.path = line.substr(sp1 + 1, sp2 - sp1 - 1);
  if (line.substr(sp2 + 1) != "HTTP/1.1" && line.substr(sp2 + 1) != "HTTP/1.0")
    throw ProtocolError("http: unsupported version");

  const std::size_t body_off = detail::parse_headers(raw, eol + 2, req.headers);
  const auto it = req.headers.find("content-length");
  if (it == req.headers.end()) {
    if (req.method == "POST") throw ProtocolError("http: POST without Content-Length");
    if (raw.size() != body_off) throw ProtocolError("http: unexpected body");
    return req;
  }
  std::size_t len = 0;
  try {
    len = static_cast<std::size_t>(std::stoull(it->second));
  } catch (...) {
    throw ProtocolError("http: bad Content-Length");
  }
  if (raw.size() - body_off != len) throw ProtocolError("http: body length mismatch");
  req.body = raw.substr(body_off);
  return req;
}

inline HttpResponse parse_http_response(const std::string& raw) {
  HttpResponse res;
  const std::size_t eol = raw.find("\r\n");
  if (eol == std::string::npos) throw ProtocolError("http: missing status line");
  const std::string line = raw.substr(0, eol);
  if (line.rfind("HTTP/1.", 0) != 0) throw ProtocolError("http: malformed status line");
  const std::size_t sp1 = line.find(' ');
  if (sp1 == std::string::npos) throw ProtocolError("http: malformed status line");
  const std::size_t sp2 = line.find(' ', sp1 + 1);
  try {
    res.status = std::stoi(line.substr(sp1 + 1, sp2 - sp1 - 1));
  } catch (...) {
    throw ProtocolError("http: bad status code");
  }
  if (sp2 != std::string::npos) res.reason = line.substr(sp2 + 1);

  const std::size_t body_off = detail::parse_headers(raw, eol + 2, res.headers);
  const auto it = res.headers.find("content-length");
  if (it == res.headers.end()) throw ProtocolError("http: response without Content-Length");
  std::size_t len = 0;
  try {
    len = static_cast<std::size_t>(std::stoull(it->second));
  } catch (...) {
    throw ProtocolError("http: bad Content-Length");
  }
  if (raw.size() - body_off != len) throw ProtocolError("http: body length mismatch");
  res.body = raw.substr(body_off);
  return res;
}

}  // namespace prolat
