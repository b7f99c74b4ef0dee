#pragma once

#include <stdexcept>
#include <string>

namespace prolat {

// Error taxonomy; every throwing path in the library uses one of these.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ArgumentError : std::invalid_argument {
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or out-of-order traffic between edge and cloud.
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

struct SerializationError : std::runtime_error {
  explicit SerializationError(const std::string& what) : std::runtime_error(what) {}
};

struct TransportError : std::runtime_error {
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace prolat
