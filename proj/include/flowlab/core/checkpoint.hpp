#pragma once

#include <string>

#include <json.hpp>

#include "flowlab/nn/layers.hpp"

namespace flowlab::ckpt {

/// Self-describing parameter container. Layout: an 8-byte magic, a 4-byte
/// little-endian header length, a JSON header {kind, tensors:[{name,shape}],
/// extra}, then the raw float32 tensor data in header order. The header is
/// always parsed and validated in full before any parameter bytes are read.
/// Byte order is the host's; this targets little-endian machines.

/// Writes `params` (names, shapes, values) under the given kind tag.
/// `extra` carries arbitrary kind-specific metadata.
void save(const std::string& path, const std::string& kind, const nlohmann::json& extra,
          const nn::ParamRefs<float>& params);

/// Parses and returns the JSON header without touching parameter data.
nlohmann::json peek(const std::string& path);

/// Validates kind, tensor count, names, and shapes against `params`, then
/// fills the parameter values. Returns the header's `extra` object.
/// Throws std::runtime_error with a "checkpoint:" message on any mismatch.
nlohmann::json load(const std::string& path, const std::string& kind,
                    const nn::ParamRefs<float>& params);

}  // namespace flowlab::ckpt
