#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedssl/data/augment.hpp"
#include "fedssl/data/dataset.hpp"
#include "fedssl/nn/model.hpp"
#include "fedssl/rng.hpp"
#include "fedssl/ssl/pseudo_label.hpp"

namespace fedssl::federation {

enum class Method {
  FedAvgSup,
  FedProxSup,
  FedAvgFixMatch,
  FedAvgUDA,
  FedProxFixMatch,
  FedProxUDA,
  FedLabel,
};

std::string_view to_string(Method m);
std::optional<Method> parse_method(std::string_view name);

struct MethodConfig {
  Method method = Method::FedLabel;
  ssl::SslConfig ssl;
  /// Local SGD steps on labeled data.
  std::size_t tau = 20;
  /// Local SGD steps on pseudo-labelled unlabeled data.
  std::size_t tau_prime = 20;
  double lr = 0.05;
  std::size_t batch_size = 16;
  /// Proximal coefficient; only used (and only allowed > 0) by FedProx variants.
  double prox_mu = 0.0;
  /// Sharpening temperature of the UDA baselines.
  double uda_temperature = 0.4;

  bool uses_proximal() const;
  bool uses_unlabeled() const { return method != Method::FedAvgSup && method != Method::FedProxSup; }
  void validate() const;
};

struct ServerState {
  nn::ModelParams global;
  std::size_t round = 0;
  std::uint64_t seed = 0;
};

struct ClientStats {
  std::size_t labeled_count = 0;
  std::size_t unlabeled_count = 0;
  std::size_t accepted_unlabeled_count = 0;
  /// Accepted pseudo-labels that match the quarantined label (evaluation only).
  std::size_t pseudo_correct = 0;
  std::size_t kl_active_count = 0;
  double lambda_sum = 0.0;
  double sup_loss = 0.0;
  double unsup_ce = 0.0;
  double unsup_kl = 0.0;

  double pseudo_label_accuracy() const {
    return accepted_unlabeled_count == 0 ? 0.0
                                         : static_cast<double>(pseudo_correct) / static_cast<double>(accepted_unlabeled_count);
  }
};

/// What a client sends back: the combined delta and its aggregation weight r_k.
struct ClientUpdate {
  std::size_t client_id = 0;
  std::vector<double> delta;
  /// labeled_count + accepted_unlabeled_count.
  std::size_t weight = 0;
  ClientStats stats;
};

/// ceil(fraction * clients) distinct indices drawn uniformly without replacement, sorted.
std::vector<std::size_t> sample_clients(std::size_t clients, double fraction, Rng& rng);

struct SupervisedResult {
  nn::ModelParams local;
  std::vector<double> delta;
  /// Mean training loss over the steps taken (0 if none).
  double mean_loss = 0.0;
};

/// tau mini-batch SGD steps on the client's labeled data starting from `global`, with the
/// proximal term for FedProx variants. Empty labeled set -> zero delta.
SupervisedResult supervised_local_update(const nn::ModelParams& global, const data::ClientDataset& client,
                                         const MethodConfig& cfg, Rng& rng);

struct UnsupervisedResult {
  std::vector<double> delta;
  ClientStats stats;
};

/// Observer for per-sample pseudo-label decisions (audit logs, invariant checks).
using DecisionObserver = std::function<void(std::size_t round, const data::ClientDataset& client,
                                            std::span<const ssl::PseudoLabelDecision> decisions)>;

/// FedLabel unlabeled phase: decisions from the frozen (global, local) pair, then tau' SGD steps
/// on the accepted samples starting again from `global`.
UnsupervisedResult semi_supervised_local_update(const nn::ModelParams& global, const nn::ModelParams& local,
                                                const data::ClientDataset& client, const MethodConfig& cfg,
                                                const data::Augmenter& augmenter, Rng& rng,
                                                std::vector<ssl::PseudoLabelDecision>* decisions_out = nullptr);

/// FixMatch / UDA unlabeled phase. Targets come from the local model on weakly augmented views
/// and are kept when max prob > beta; the student starts from `global` and sees strong views.
UnsupervisedResult baseline_unsup_update(const nn::ModelParams& global, const nn::ModelParams& local,
                                         const data::ClientDataset& client, const MethodConfig& cfg,
                                         const data::Augmenter& augmenter, Rng& rng);

/// One client's full round: supervised phase, then the method's unlabeled phase.
ClientUpdate client_round(const nn::ModelParams& global, const data::ClientDataset& client, const MethodConfig& cfg,
                          const data::Augmenter& augmenter, std::uint64_t seed, std::size_t round,
                          const DecisionObserver& observer = {});

/// w <- w + sum_k (r_k / sum r) * delta_k, reduced in ascending client-id order. If every weight
/// is zero the global model is left unchanged and a warning is written to stderr.
/// Returns the normalized weights in client-id order.
std::vector<double> aggregate(ServerState& server, std::span<const ClientUpdate> updates);

}  // namespace fedssl::federation
