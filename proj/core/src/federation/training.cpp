#include "fedssl/federation/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "fedssl/data/partition.hpp"
#include "fedssl/errors.hpp"
#include "fedssl/nn/metrics.hpp"

namespace fedssl::federation {
namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kSamplingStream = 0x5a3e;

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::vector<ClientUpdate> run_clients(std::span<const std::size_t> chosen, std::span<const data::ClientDataset> clients,
                                      const nn::ModelParams& global, const MethodConfig& method,
                                      const data::Augmenter& augmenter, std::uint64_t seed, std::size_t round,
                                      std::size_t workers, const DecisionObserver& observer) {
  std::vector<ClientUpdate> updates(chosen.size());
  std::vector<std::exception_ptr> errors(chosen.size());
  auto work = [&](std::size_t i) {
    try {
      updates[i] = client_round(global, clients[chosen[i]], method, augmenter, seed, round, observer);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), chosen.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < chosen.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < chosen.size(); i = next++) work(i);
      });
    }
  }
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericError& e) {
      throw NumericError("round " + std::to_string(round) + ", client " + std::to_string(clients[chosen[i]].id) +
                         ": " + e.what());
    }
  }
  return updates;
}

}  // namespace

nn::ModelParams initial_model(std::size_t input_width, std::size_t classes, std::span<const std::size_t> hidden,
                              std::uint64_t seed) {
  std::vector<std::size_t> widths;
  widths.push_back(input_width);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(classes);
  Rng rng = make_rng(seed, {kInitStream});
  return nn::ModelParams::random(nn::make_architecture(widths), rng);
}

TrainingResult run_training(std::span<const data::ClientDataset> clients, const MethodConfig& method,
                            const TrainingOptions& options, const data::Augmenter& augmenter, const EvalSet& test,
                            const Observers& observers) {
  method.validate();
  if (clients.empty()) throw ConfigError("run_training: no clients");
  if (options.eval_every == 0) throw ConfigError("eval_every must be >= 1");
  const std::size_t input_width = static_cast<std::size_t>(
      std::max(clients.front().labeled.features.cols(), clients.front().unlabeled.features().cols()));

  ServerState server;
  server.seed = options.seed;
  server.global = initial_model(input_width, clients.front().classes, options.hidden, options.seed);

  std::vector<std::optional<double>> mismatch(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].labeled.size() > 0 && clients[k].unlabeled.size() > 0) mismatch[k] = data::mismatch_score(clients[k]);
  }

  TrainingResult result;
  double last_accuracy = 0.0;
  for (std::size_t t = 0; t < options.rounds; ++t) {
    server.round = t;
    Rng sampler = make_rng(options.seed, {kSamplingStream, t});
    const auto chosen = sample_clients(clients.size(), options.participation, sampler);
    auto updates = run_clients(chosen, clients, server.global, method, augmenter, options.seed, t, options.workers,
                               observers.on_decisions);
    for (const auto& u : updates) {
      if (!finite(u.delta)) {
        throw NumericError("round " + std::to_string(t) + ", client " + std::to_string(u.client_id) +
                           ": non-finite update");
      }
    }
    const auto weights = aggregate(server, updates);
    if (!server.global.all_finite()) throw NumericError("round " + std::to_string(t) + ": non-finite global model");
    if (observers.on_round) observers.on_round(server, updates, weights);

    RoundMetrics m;
    m.round = t;
    if ((t + 1) % options.eval_every == 0 || t + 1 == options.rounds) {
      last_accuracy = nn::top1_accuracy(server.global, test.features, test.labels);
    }
    m.test_accuracy = last_accuracy;
    std::size_t unlabeled = 0;
    std::size_t accepted = 0;
    std::size_t correct = 0;
    double lambda_sum = 0.0;
    double mismatch_sum = 0.0;
    std::size_t mismatch_n = 0;
    for (const auto& u : updates) {
      m.participants.push_back(u.client_id);
      m.accepted_counts.push_back(u.stats.accepted_unlabeled_count);
      m.aggregation_weights.push_back(u.weight);
      unlabeled += u.stats.unlabeled_count;
      accepted += u.stats.accepted_unlabeled_count;
      correct += u.stats.pseudo_correct;
      lambda_sum += u.stats.lambda_sum;
      m.sup_loss += u.stats.sup_loss;
      m.unsup_ce += u.stats.unsup_ce;
      m.unsup_kl += u.stats.unsup_kl;
      if (mismatch[u.client_id]) {
        mismatch_sum += *mismatch[u.client_id];
        ++mismatch_n;
      }
    }
    const double n = static_cast<double>(updates.size());
    m.sup_loss /= n;
    m.unsup_ce /= n;
    m.unsup_kl /= n;
    m.accepted_fraction = unlabeled ? static_cast<double>(accepted) / static_cast<double>(unlabeled) : 0.0;
    m.pseudo_accuracy = accepted ? static_cast<double>(correct) / static_cast<double>(accepted) : 0.0;
    m.mean_lambda = accepted ? lambda_sum / static_cast<double>(accepted) : 0.0;
    m.mean_mismatch = mismatch_n ? mismatch_sum / static_cast<double>(mismatch_n) : 0.0;
    result.rounds.push_back(std::move(m));
  }
  result.final_params = std::move(server.global);
  return result;
}

}  // namespace fedssl::federation
