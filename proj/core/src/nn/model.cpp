#include "fedssl/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedssl/errors.hpp"

namespace fedssl::nn {

std::vector<LayerShape> make_architecture(std::span<const std::size_t> widths) {
  if (widths.size() < 2) throw ConfigError("architecture needs at least input and output widths");
  std::vector<LayerShape> layers;
  layers.reserve(widths.size() - 1);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0) throw ConfigError("layer widths must be positive");
    layers.push_back({widths[i], widths[i + 1]});
  }
  return layers;
}

ModelParams::ModelParams(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  compute_offsets();
  values_.assign(offsets_.back(), 0.0);
}

void ModelParams::compute_offsets() {
  offsets_.assign(1, 0);
  for (const auto& l : layers_) offsets_.push_back(offsets_.back() + l.param_count());
}

ModelParams ModelParams::random(std::vector<LayerShape> layers, Rng& rng) {
  ModelParams p(std::move(layers));
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.layers_[l].in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t begin = p.offsets_[l];
    for (std::size_t i = begin; i < p.offsets_[l + 1]; ++i) p.values_[i] = dist(rng);
  }
  return p;
}

ModelParams ModelParams::unflatten(std::vector<LayerShape> layers, std::vector<double> flat) {
  ModelParams p(std::move(layers));
  if (flat.size() != p.values_.size()) {
    throw ConfigError("flat parameter length " + std::to_string(flat.size()) + " does not match architecture (" +
                      std::to_string(p.values_.size()) + ")");
  }
  p.values_ = std::move(flat);
  return p;
}

MatrixMap ModelParams::weights(std::size_t l) {
  const auto& s = layers_.at(l);
  return MatrixMap(values_.data() + offsets_[l], static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
}

ConstMatrixMap ModelParams::weights(std::size_t l) const {
  const auto& s = layers_.at(l);
  return ConstMatrixMap(values_.data() + offsets_[l], static_cast<Eigen::Index>(s.out),
                        static_cast<Eigen::Index>(s.in));
}

VectorMap ModelParams::bias(std::size_t l) {
  const auto& s = layers_.at(l);
  return VectorMap(values_.data() + offsets_[l] + s.weight_count(), static_cast<Eigen::Index>(s.out));
}

ConstVectorMap ModelParams::bias(std::size_t l) const {
  const auto& s = layers_.at(l);
  return ConstVectorMap(values_.data() + offsets_[l] + s.weight_count(), static_cast<Eigen::Index>(s.out));
}

bool ModelParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ProbVector ProbVector::one_hot(std::size_t n, std::size_t k) {
  std::vector<double> p(n, 0.0);
  p.at(k) = 1.0;
  return ProbVector(std::move(p));
}

std::size_t ProbVector::argmax() const {
  return static_cast<std::size_t>(std::distance(probs_.begin(), std::max_element(probs_.begin(), probs_.end())));
}

double ProbVector::max() const { return probs_.empty() ? 0.0 : probs_[argmax()]; }

bool ProbVector::is_normalized(double tol) const {
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

}  // namespace fedssl::nn
