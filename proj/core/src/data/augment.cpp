#include "fedssl/data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fedssl/errors.hpp"

namespace fedssl::data {
namespace {

constexpr double kWeakNoise = 0.01;

double random_sign(Rng& rng) { return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0; }

// Nearest-neighbour resampling through an inverse map (dst pixel -> src coordinate), zero fill.
template <typename InverseMap>
std::vector<double> resample(std::span<const double> img, const ImageShape& shape, InverseMap inverse) {
  std::vector<double> out(img.size(), 0.0);
  const auto rows = static_cast<long>(shape.rows);
  const auto cols = static_cast<long>(shape.cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      const auto [sr, sc] = inverse(static_cast<double>(r), static_cast<double>(c));
      const long ir = std::lround(sr);
      const long ic = std::lround(sc);
      if (ir >= 0 && ir < rows && ic >= 0 && ic < cols) {
        out[static_cast<std::size_t>(r * cols + c)] = img[static_cast<std::size_t>(ir * cols + ic)];
      }
    }
  }
  return out;
}

void clamp_unit(std::vector<double>& v) {
  for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
}

}  // namespace

std::string_view to_string(StrongOp op) {
  switch (op) {
    case StrongOp::Identity: return "identity";
    case StrongOp::Rotate: return "rotate";
    case StrongOp::TranslateX: return "translate_x";
    case StrongOp::TranslateY: return "translate_y";
    case StrongOp::ShearX: return "shear_x";
    case StrongOp::ShearY: return "shear_y";
    case StrongOp::Brightness: return "brightness";
    case StrongOp::Contrast: return "contrast";
    case StrongOp::Invert: return "invert";
    case StrongOp::Solarize: return "solarize";
    case StrongOp::Noise: return "noise";
    case StrongOp::Mask: return "mask";
  }
  return "unknown";
}

void AugmentConfig::validate() const {
  if (!(magnitude >= 0.0 && magnitude <= 30.0)) throw ConfigError("augment.magnitude must be in [0, 30]");
  if (vector_noise < 0.0) throw ConfigError("augment.vector_noise must be >= 0");
  if (!(vector_mask >= 0.0 && vector_mask <= 1.0)) throw ConfigError("augment.vector_mask must be in [0, 1]");
}

Augmenter::Augmenter(AugmentConfig config) : config_(std::move(config)) { config_.validate(); }

std::vector<double> Augmenter::weak(std::span<const double> features, Rng& rng) const {
  if (config_.image) {
    std::uniform_int_distribution<int> shift(-1, 1);
    const double dr = shift(rng);
    const double dc = shift(rng);
    return resample(features, *config_.image, [&](double r, double c) { return std::pair{r - dr, c - dc}; });
  }
  std::normal_distribution<double> noise(0.0, kWeakNoise);
  std::vector<double> out(features.begin(), features.end());
  for (auto& x : out) x += noise(rng);
  return out;
}

std::vector<double> Augmenter::apply(StrongOp op, std::span<const double> features, double intensity, Rng& rng) const {
  std::vector<double> out(features.begin(), features.end());
  if (op == StrongOp::Identity || intensity <= 0.0) return out;
  const double m = std::min(intensity, 1.0);

  if (op == StrongOp::Noise) {
    std::normal_distribution<double> noise(0.0, config_.vector_noise * m);
    for (auto& x : out) x += noise(rng);
  } else if (op == StrongOp::Mask) {
    std::bernoulli_distribution drop(config_.vector_mask * m);
    for (auto& x : out) {
      if (drop(rng)) x = 0.0;
    }
  }
  if (op == StrongOp::Noise || op == StrongOp::Mask) {
    if (config_.image) clamp_unit(out);
    return out;
  }

  if (!config_.image) throw ConfigError(std::string("augment: op '") + std::string(to_string(op)) + "' needs image-shaped data");
  const ImageShape shape = *config_.image;
  const double cr = (static_cast<double>(shape.rows) - 1.0) / 2.0;
  const double cc = (static_cast<double>(shape.cols) - 1.0) / 2.0;
  const double sign = random_sign(rng);

  switch (op) {
    case StrongOp::Rotate: {
      const double theta = sign * m * 30.0 * std::numbers::pi / 180.0;
      const double cs = std::cos(theta);
      const double sn = std::sin(theta);
      out = resample(features, shape, [&](double r, double c) {
        const double y = r - cr;
        const double x = c - cc;
        return std::pair{cs * y - sn * x + cr, sn * y + cs * x + cc};
      });
      break;
    }
    case StrongOp::TranslateX: {
      const double d = std::round(sign * m * 0.3 * static_cast<double>(shape.cols));
      out = resample(features, shape, [&](double r, double c) { return std::pair{r, c - d}; });
      break;
    }
    case StrongOp::TranslateY: {
      const double d = std::round(sign * m * 0.3 * static_cast<double>(shape.rows));
      out = resample(features, shape, [&](double r, double c) { return std::pair{r - d, c}; });
      break;
    }
    case StrongOp::ShearX: {
      const double s = sign * m * 0.3;
      out = resample(features, shape, [&](double r, double c) { return std::pair{r, c - s * (r - cr)}; });
      break;
    }
    case StrongOp::ShearY: {
      const double s = sign * m * 0.3;
      out = resample(features, shape, [&](double r, double c) { return std::pair{r - s * (c - cc), c}; });
      break;
    }
    case StrongOp::Brightness: {
      const double factor = 1.0 + sign * m * 0.9;
      for (auto& x : out) x *= factor;
      break;
    }
    case StrongOp::Contrast: {
      double mean = 0.0;
      for (double x : out) mean += x;
      mean /= static_cast<double>(std::max<std::size_t>(out.size(), 1));
      const double factor = 1.0 + sign * m * 0.9;
      for (auto& x : out) x = mean + (x - mean) * factor;
      break;
    }
    case StrongOp::Invert:
      for (auto& x : out) x = (1.0 - m) * x + m * (1.0 - x);
      break;
    case StrongOp::Solarize: {
      const double threshold = 1.0 - m;
      for (auto& x : out) {
        if (x > threshold) x = 1.0 - x;
      }
      break;
    }
    default:
      break;
  }
  clamp_unit(out);
  return out;
}

std::vector<double> Augmenter::strong(std::span<const double> features, Rng& rng) const {
  std::vector<double> out(features.begin(), features.end());
  if (!config_.strong_enabled) return out;
  const std::span<const StrongOp> pool = config_.image ? std::span<const StrongOp>(kImageOps)
                                                       : std::span<const StrongOp>(kVectorOps);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const double intensity = config_.magnitude / 30.0;
  for (std::size_t i = 0; i < config_.n_ops; ++i) out = apply(pool[pick(rng)], out, intensity, rng);
  return out;
}

Matrix Augmenter::strong_rows(const Matrix& features, Rng& rng) const {
  if (!config_.strong_enabled) return features;
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const auto row = strong(std::span<const double>(features.row(r).data(), static_cast<std::size_t>(features.cols())), rng);
    std::copy(row.begin(), row.end(), out.row(r).data());
  }
  return out;
}

Matrix Augmenter::weak_rows(const Matrix& features, Rng& rng) const {
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const auto row = weak(std::span<const double>(features.row(r).data(), static_cast<std::size_t>(features.cols())), rng);
    std::copy(row.begin(), row.end(), out.row(r).data());
  }
  return out;
}

}  // namespace fedssl::data
