#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "fedssl/rng.hpp"

namespace fedssl::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

/// One dense layer: `out x in` weights followed by `out` biases in the flat buffer.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;

  std::size_t weight_count() const { return in * out; }
  std::size_t param_count() const { return in * out + out; }
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Builds the layer list for widths [input, hidden..., classes].
std::vector<LayerShape> make_architecture(std::span<const std::size_t> widths);

/// Parameters of an MLP stored as one flat vector (the unit of communication).
/// Layer l occupies a contiguous block: row-major weights, then bias.
class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-initialized parameters for the given architecture.
  explicit ModelParams(std::vector<LayerShape> layers);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  static ModelParams random(std::vector<LayerShape> layers, Rng& rng);

  /// Rebuilds parameters from a flat vector; throws ConfigError on length mismatch.
  static ModelParams unflatten(std::vector<LayerShape> layers, std::vector<double> flat);

  const std::vector<double>& flatten() const { return values_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t class_count() const { return layers_.empty() ? 0 : layers_.back().out; }

  MatrixMap weights(std::size_t l);
  ConstMatrixMap weights(std::size_t l) const;
  VectorMap bias(std::size_t l);
  ConstVectorMap bias(std::size_t l) const;

  bool all_finite() const;
  bool same_shape(const ModelParams& other) const { return layers_ == other.layers_; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> values_;

  void compute_offsets();
};

/// Gradient of a scalar loss; congruent with the ModelParams it was computed for.
/// Uses the same flat layout so it can be indexed by the same offsets.
using Gradient = ModelParams;

/// A categorical distribution over N classes (post-softmax model output).
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(std::vector<double> probs) : probs_(std::move(probs)) {}

  static ProbVector uniform(std::size_t n) { return ProbVector(std::vector<double>(n, 1.0 / static_cast<double>(n))); }
  static ProbVector one_hot(std::size_t n, std::size_t k);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> values() const { return probs_; }

  /// Index of the largest entry; the lowest index wins ties.
  std::size_t argmax() const;
  double max() const;

  /// Entries in [0,1] and sum within `tol` of 1.
  bool is_normalized(double tol = 1e-6) const;

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> probs_;
};

}  // namespace fedssl::nn
