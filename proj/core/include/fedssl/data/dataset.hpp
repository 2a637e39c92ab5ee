#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedssl/nn/model.hpp"

namespace fedssl::data {

using nn::Matrix;

/// One example. Classes are 0-based indices in [0, classes).
struct Sample {
  std::vector<double> features;
  int label = 0;
};

struct ImageShape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// A pool of samples plus the metadata needed to train on and augment them.
struct Dataset {
  std::vector<Sample> samples;
  std::size_t classes = 0;
  std::size_t dim = 0;
  /// Set when features are a row-major grayscale image with values in [0,1].
  std::optional<ImageShape> image;

  std::size_t size() const { return samples.size(); }
};

/// Packs the given samples into an (n x dim) feature matrix.
Matrix feature_matrix(const Dataset& data, std::span<const std::size_t> indices);
Matrix feature_matrix(const Dataset& data);
std::vector<int> labels_of(const Dataset& data);

/// Labeled portion of a client's data.
struct LabeledSet {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

class QuarantineAudit;

/// Unlabeled portion of a client's data. The ground-truth labels are retained for evaluation
/// only: the sole reader is QuarantineAudit, which training code never calls.
class UnlabeledSet {
 public:
  UnlabeledSet() = default;
  UnlabeledSet(Matrix features, std::vector<int> hidden_labels);

  const Matrix& features() const { return features_; }
  std::size_t size() const { return static_cast<std::size_t>(features_.rows()); }

 private:
  friend class QuarantineAudit;
  Matrix features_;
  std::vector<int> hidden_labels_;
};

/// One client's local data D_k = D_L,k u D_U,k.
struct ClientDataset {
  std::size_t id = 0;
  std::size_t classes = 0;
  LabeledSet labeled;
  UnlabeledSet unlabeled;
  /// Indices into the source pool, for partition audits.
  std::vector<std::size_t> labeled_source;
  std::vector<std::size_t> unlabeled_source;

  std::size_t size() const { return labeled.size() + unlabeled.size(); }
};

/// The only access path to quarantined labels: evaluation metrics, audit logs, and tests.
class QuarantineAudit {
 public:
  static int label(const UnlabeledSet& set, std::size_t i) { return set.hidden_labels_.at(i); }
  static std::span<const int> labels(const UnlabeledSet& set) { return set.hidden_labels_; }
  /// Replaces the hidden labels (used to prove training never reads them).
  static void overwrite(UnlabeledSet& set, std::vector<int> labels);
};

/// Per-class sample counts.
std::vector<std::size_t> class_histogram(std::span<const int> labels, std::size_t classes);

}  // namespace fedssl::data
