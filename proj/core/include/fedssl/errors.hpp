#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedssl {

/// Invalid or inconsistent configuration (bad key, out-of-range value, shape mismatch).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values appeared during training; the run cannot continue.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `offset` is the byte position where parsing failed.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace fedssl
