#include "fedssl/nn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "fedssl/errors.hpp"

namespace fedssl::nn {
namespace {

constexpr std::array<char, 4> kMagic = {'F', 'S', 'S', 'L'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, std::uint64_t& offset) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw LoadError("truncated checkpoint", offset);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  offset += sizeof(T);
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layer_count()));
  for (const auto& l : params.layers()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out));
  }
  for (double v : params.values()) put_le<double>(out, v);
}

ModelParams read_checkpoint(std::istream& in) {
  std::uint64_t offset = 0;
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw LoadError("truncated checkpoint header", offset);
  if (magic != kMagic) throw LoadError("bad checkpoint magic", offset);
  offset += magic.size();
  const auto version_offset = offset;
  if (get_le<std::uint32_t>(in, offset) != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version", version_offset);
  }
  const auto layer_count = get_le<std::uint32_t>(in, offset);
  std::vector<LayerShape> layers;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const auto shape_offset = offset;
    LayerShape s;
    s.in = get_le<std::uint32_t>(in, offset);
    s.out = get_le<std::uint32_t>(in, offset);
    if (s.in == 0 || s.out == 0) throw LoadError("zero-width layer in checkpoint", shape_offset);
    layers.push_back(s);
  }
  ModelParams params(std::move(layers));
  for (double& v : params.values()) v = get_le<double>(in, offset);
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace fedssl::nn
