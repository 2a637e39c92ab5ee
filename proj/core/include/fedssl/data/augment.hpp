#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedssl/data/dataset.hpp"
#include "fedssl/rng.hpp"

namespace fedssl::data {

/// Strong-augmentation pool. Image-shaped data draws from every entry up to Solarize; generic
/// feature vectors draw from {Identity, Noise, Mask}.
enum class StrongOp {
  Identity,
  Rotate,
  TranslateX,
  TranslateY,
  ShearX,
  ShearY,
  Brightness,
  Contrast,
  Invert,
  Solarize,
  Noise,
  Mask,
};

std::string_view to_string(StrongOp op);

inline constexpr std::array kImageOps = {StrongOp::Identity,   StrongOp::Rotate,     StrongOp::TranslateX,
                                         StrongOp::TranslateY, StrongOp::ShearX,     StrongOp::ShearY,
                                         StrongOp::Brightness, StrongOp::Contrast,   StrongOp::Invert,
                                         StrongOp::Solarize};
inline constexpr std::array kVectorOps = {StrongOp::Identity, StrongOp::Noise, StrongOp::Mask};

struct AugmentConfig {
  std::optional<ImageShape> image;
  std::size_t n_ops = 1;
  /// RandAugment-style magnitude in [0, 30]; transforms run at intensity magnitude / 30.
  double magnitude = 10.0;
  /// false makes strong() the identity (ablation switch).
  bool strong_enabled = true;
  /// Stddev of the generic-vector noise op at full intensity.
  double vector_noise = 1.0;
  /// Fraction of coordinates zeroed by the generic-vector mask op at full intensity.
  double vector_mask = 0.5;

  void validate() const;
};

/// Weak and strong input perturbations. Stateless apart from configuration; callers pass the RNG.
class Augmenter {
 public:
  explicit Augmenter(AugmentConfig config);

  const AugmentConfig& config() const { return config_; }

  /// Images: shift by -1/0/+1 pixels per axis (zero fill). Vectors: + N(0, 0.01^2) noise.
  std::vector<double> weak(std::span<const double> features, Rng& rng) const;
  /// n_ops transforms drawn uniformly (with replacement) from the pool at the configured magnitude.
  std::vector<double> strong(std::span<const double> features, Rng& rng) const;

  /// Applies one op at intensity in [0,1]; intensity 0 returns the input unchanged.
  std::vector<double> apply(StrongOp op, std::span<const double> features, double intensity, Rng& rng) const;

  /// Row-wise strong() over a feature matrix.
  Matrix strong_rows(const Matrix& features, Rng& rng) const;
  Matrix weak_rows(const Matrix& features, Rng& rng) const;

 private:
  AugmentConfig config_;
};

}  // namespace fedssl::data
