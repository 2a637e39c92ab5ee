#pragma once

#include <filesystem>
#include <cstdint>
#include <iosfwd>

#include "fedssl/nn/model.hpp"

namespace fedssl::nn {

/// Binary checkpoint layout (all integers and floats little-endian):
///   "FSSL" | u32 version | u32 layer_count | layer_count x (u32 in, u32 out) | float64 params...
/// Parameters follow the in-memory flat layout (row-major weights, then bias, per layer).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fedssl::nn
