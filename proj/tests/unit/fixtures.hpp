#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "fedssl/data/dataset.hpp"
#include "fedssl/nn/model.hpp"
#include "fedssl/nn/network.hpp"
#include "fedssl/rng.hpp"

namespace fixtures {

inline fedssl::nn::ModelParams random_model(std::vector<std::size_t> widths, std::uint64_t seed) {
  fedssl::Rng rng(seed);
  return fedssl::nn::ModelParams::random(fedssl::nn::make_architecture(widths), rng);
}

inline fedssl::nn::Matrix random_matrix(std::size_t rows, std::size_t cols, fedssl::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  fedssl::nn::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline fedssl::nn::Matrix random_distributions(std::size_t rows, std::size_t classes, fedssl::Rng& rng) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  fedssl::nn::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(classes));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).sum();
  return m;
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, fedssl::Rng& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
  std::vector<int> out(n);
  for (auto& l : out) l = pick(rng);
  return out;
}

// A client whose features are random and whose labels follow a fixed rule.
inline fedssl::data::ClientDataset random_client(std::size_t id, std::size_t labeled, std::size_t unlabeled,
                                                 std::size_t dim, std::size_t classes, std::uint64_t seed) {
  fedssl::Rng rng(seed);
  fedssl::data::ClientDataset c;
  c.id = id;
  c.classes = classes;
  c.labeled.features = random_matrix(labeled, dim, rng);
  c.labeled.labels = random_labels(labeled, classes, rng);
  c.unlabeled = fedssl::data::UnlabeledSet(random_matrix(unlabeled, dim, rng), random_labels(unlabeled, classes, rng));
  return c;
}

}  // namespace fixtures
