#pragma once

namespace flowlab {

/// Tool version stamped into manifests and `--version` output. Bump on any
/// change that affects produced artifacts.
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace flowlab
