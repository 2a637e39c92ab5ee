#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedssl/federation/protocol.hpp"

namespace fedssl::federation {

/// Per-round record of one training run.
struct RoundMetrics {
  std::size_t round = 0;
  double test_accuracy = 0.0;
  /// Mean class-distribution mismatch over participating clients that have both subsets.
  double mean_mismatch = 0.0;
  /// Accepted unlabeled samples / unlabeled samples held by participants.
  double accepted_fraction = 0.0;
  /// Fraction of accepted pseudo-labels that match the quarantined label.
  double pseudo_accuracy = 0.0;
  /// Mean consistency weight over accepted samples (zero where the KL term is inactive).
  double mean_lambda = 0.0;
  double sup_loss = 0.0;
  double unsup_ce = 0.0;
  double unsup_kl = 0.0;
  std::vector<std::size_t> participants;
  std::vector<std::size_t> accepted_counts;
  std::vector<std::size_t> aggregation_weights;
};

struct TrainingOptions {
  std::size_t rounds = 150;
  /// Fraction of clients sampled each round.
  double participation = 0.3;
  std::uint64_t seed = 0;
  /// Evaluate the global model every `eval_every` rounds (and always on the last round);
  /// rows in between repeat the previous accuracy.
  std::size_t eval_every = 1;
  /// Client updates run on up to this many threads. Results do not depend on it.
  std::size_t workers = 1;
  std::vector<std::size_t> hidden = {128};
};

struct EvalSet {
  nn::Matrix features;
  std::vector<int> labels;
};

struct TrainingResult {
  std::vector<RoundMetrics> rounds;
  nn::ModelParams final_params;
};

/// Called after aggregation each round with the client updates that were applied.
using RoundObserver = std::function<void(const ServerState& server, std::span<const ClientUpdate> updates,
                                         std::span<const double> normalized_weights)>;

struct Observers {
  DecisionObserver on_decisions;
  RoundObserver on_round;
};

/// Initial global model w^(0,0) for a run: seeded uniform fan-in initialization.
nn::ModelParams initial_model(std::size_t input_width, std::size_t classes, std::span<const std::size_t> hidden,
                              std::uint64_t seed);

/// Runs T rounds of sample -> local updates -> aggregate, evaluating on `test` each round.
/// Throws NumericError naming the round (and client) if parameters become non-finite.
TrainingResult run_training(std::span<const data::ClientDataset> clients, const MethodConfig& method,
                            const TrainingOptions& options, const data::Augmenter& augmenter, const EvalSet& test,
                            const Observers& observers = {});

}  // namespace fedssl::federation
