#pragma once

#include <memory>
#include <string>

#include "prolat/linear_codec.hpp"
#include "prolat/metaae.hpp"

namespace prolat {

inline std::unique_ptr<Codec> codec_from_bytes(const std::string& bytes) {
  if (bytes.size() < 4) throw SerializationError("codec file too short");
  const std::string magic = bytes.substr(0, 4);
  if (magic == "PMA1") return std::make_unique<MetaAE>(MetaAE::deserialize(bytes));
  if (magic == "PLO1")
    return std::make_unique<LinearOrthoCodec>(LinearOrthoCodec::deserialize(bytes));
  throw SerializationError("unknown codec magic: " + magic);
}

inline std::unique_ptr<Codec> load_codec(const std::string& path) {
  return codec_from_bytes(read_file(path));
}

}  // namespace prolat
