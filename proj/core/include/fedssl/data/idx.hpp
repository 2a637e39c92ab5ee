#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "fedssl/data/dataset.hpp"

namespace fedssl::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image/label pair (big-endian headers, unsigned-byte payloads). Pixels are
/// scaled to [0,1]. Labels must be < `classes`. Throws LoadError with the failing byte offset
/// on bad magic, truncation, count mismatch, or out-of-range labels.
Dataset load_idx(std::istream& images, std::istream& labels, std::size_t classes = 10);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t classes = 10);

}  // namespace fedssl::data
