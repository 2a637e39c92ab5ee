#include "fedssl/data/idx.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "fedssl/errors.hpp"

namespace fedssl::data {
namespace {

std::uint32_t read_be32(std::istream& in, std::uint64_t& offset, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw LoadError(std::string("truncated ") + what, offset);
  offset += 4;
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

}  // namespace

Dataset load_idx(std::istream& images, std::istream& labels, std::size_t classes) {
  std::uint64_t img_off = 0;
  if (read_be32(images, img_off, "image header") != kIdxImageMagic) throw LoadError("bad IDX image magic", 0);
  const auto count = read_be32(images, img_off, "image header");
  const auto rows = read_be32(images, img_off, "image header");
  const auto cols = read_be32(images, img_off, "image header");

  std::uint64_t lbl_off = 0;
  if (read_be32(labels, lbl_off, "label header") != kIdxLabelMagic) throw LoadError("bad IDX label magic", 0);
  const auto label_count = read_be32(labels, lbl_off, "label header");
  if (label_count != count) {
    throw LoadError("IDX count mismatch: " + std::to_string(count) + " images vs " + std::to_string(label_count) +
                        " labels",
                    4);
  }

  Dataset data;
  data.classes = classes;
  data.dim = std::size_t{rows} * cols;
  data.image = ImageShape{rows, cols};
  data.samples.reserve(count);
  std::vector<unsigned char> pixels(data.dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (!images.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
      throw LoadError("truncated IDX image payload", img_off + static_cast<std::uint64_t>(images.gcount()));
    }
    img_off += pixels.size();
    char raw = 0;
    if (!labels.get(raw)) throw LoadError("truncated IDX label payload", lbl_off);
    const auto label = static_cast<unsigned char>(raw);
    if (label >= classes) {
      throw LoadError("IDX label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")", lbl_off);
    }
    ++lbl_off;
    Sample s;
    s.label = label;
    s.features.reserve(pixels.size());
    for (unsigned char p : pixels) s.features.push_back(static_cast<double>(p) / 255.0);
    data.samples.push_back(std::move(s));
  }
  return data;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t classes) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw ConfigError("cannot open IDX images: " + images.string());
  std::ifstream lbl(labels, std::ios::binary);
  if (!lbl) throw ConfigError("cannot open IDX labels: " + labels.string());
  return load_idx(img, lbl, classes);
}

}  // namespace fedssl::data
