#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/types.h>

namespace skinres {

/// Ordered (name, float tensor) pairs.
using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

/// Single-file weight format, little-endian:
///   "SKRW" | u32 version=1 | u32 count | count x { u32 name_len | name | u32 ndim | i64 dims[ndim] | f32 data }
/// A sidecar `<file>.sha256` holds "<hex digest>  <file name>\n".
/// Returns the digest of the written file.
std::string save_weights(const std::filesystem::path& path, const NamedTensors& tensors);

/// Throws Error(weight_store) when the file is malformed or disagrees with its sidecar.
/// A missing sidecar is accepted unless `require_checksum`.
NamedTensors load_weights(const std::filesystem::path& path, bool require_checksum = false);

std::filesystem::path checksum_path(const std::filesystem::path& weights_path);
/// Digest recorded in the sidecar, if present.
std::optional<std::string> read_checksum(const std::filesystem::path& weights_path);

}  // namespace skinres
