#include "fedssl/data/dataset.hpp"

#include <algorithm>

#include "fedssl/errors.hpp"

namespace fedssl::data {

Matrix feature_matrix(const Dataset& data, std::span<const std::size_t> indices) {
  Matrix m(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(data.dim));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& f = data.samples.at(indices[r]).features;
    std::copy(f.begin(), f.end(), m.row(static_cast<Eigen::Index>(r)).data());
  }
  return m;
}

Matrix feature_matrix(const Dataset& data) {
  Matrix m(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data.dim));
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& f = data.samples[r].features;
    std::copy(f.begin(), f.end(), m.row(static_cast<Eigen::Index>(r)).data());
  }
  return m;
}

std::vector<int> labels_of(const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(s.label);
  return out;
}

UnlabeledSet::UnlabeledSet(Matrix features, std::vector<int> hidden_labels)
    : features_(std::move(features)), hidden_labels_(std::move(hidden_labels)) {
  if (static_cast<std::size_t>(features_.rows()) != hidden_labels_.size()) {
    throw ConfigError("unlabeled set: feature/label count mismatch");
  }
}

void QuarantineAudit::overwrite(UnlabeledSet& set, std::vector<int> labels) {
  if (labels.size() != set.hidden_labels_.size()) throw ConfigError("quarantine overwrite: size mismatch");
  set.hidden_labels_ = std::move(labels);
}

std::vector<std::size_t> class_histogram(std::span<const int> labels, std::size_t classes) {
  std::vector<std::size_t> h(classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ConfigError("class_histogram: label out of range");
    ++h[static_cast<std::size_t>(y)];
  }
  return h;
}

}  // namespace fedssl::data
