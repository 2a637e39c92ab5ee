#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedssl/data/dataset.hpp"
#include "fedssl/rng.hpp"

namespace fedssl::data {

struct PartitionSpec {
  std::size_t clients = 20;
  double dirichlet_alpha = 0.1;
  double label_ratio = 0.2;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Gaussian blobs. Class centers are mutually orthogonal points on a sphere of radius
/// `kSyntheticRadius` (a fixed basis independent of `seed` when classes <= dim); samples add
/// isotropic noise with stddev `spread` and are shuffled by `seed`.
inline constexpr double kSyntheticRadius = 2.0;
Dataset generate_synthetic(std::size_t classes, std::size_t dim, std::size_t per_class, double spread,
                           std::uint64_t seed);
/// Class centers used by generate_synthetic (one row per class).
Matrix synthetic_centers(std::size_t classes, std::size_t dim);

/// Per class, draws client proportions from Dir(alpha * 1_M) and deals that class's samples out
/// accordingly. Empty clients are repaired by moving one sample from the currently largest
/// client. Returns per-client source indices. Throws ConfigError if clients > data.size().
std::vector<std::vector<std::size_t>> dirichlet_partition(const Dataset& data, const PartitionSpec& spec);

/// Uniform random split of one client's samples: floor(ratio * n) labeled, the rest unlabeled
/// with their labels quarantined.
ClientDataset split_labeled_unlabeled(const Dataset& data, std::span<const std::size_t> client_samples,
                                      double label_ratio, Rng& rng, std::size_t client_id = 0);

/// Full pipeline: partition then split each client with a per-client derived stream.
std::vector<ClientDataset> build_clients(const Dataset& train, const PartitionSpec& spec);

/// Total-variation distance between the label histograms of a client's labeled and
/// (quarantined) unlabeled subsets. Throws ConfigError if either subset is empty.
double mismatch_score(const ClientDataset& client);

/// Total-variation distance between two histograms after normalization.
double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Train/validation/test split of a pooled dataset (fractions must sum to 1).
struct HoldoutSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};
HoldoutSplit holdout_split(const Dataset& pool, double train_fraction, double validation_fraction,
                           std::uint64_t seed);

/// CSV dump for inspection: client,split,label,f0,...,f{d-1}.
void write_clients_csv(std::ostream& out, std::span<const ClientDataset> clients);

}  // namespace fedssl::data
