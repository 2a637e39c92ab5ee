#include "fedssl/federation/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "fedssl/errors.hpp"
#include "fedssl/nn/network.hpp"
#include "fedssl/ssl/objective.hpp"

namespace fedssl::federation {
namespace {

// Stream tags for the per-client derived RNGs.
constexpr std::uint64_t kSupervisedStream = 1;
constexpr std::uint64_t kUnlabeledStream = 2;

std::vector<std::size_t> draw_batch(std::size_t population, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (population <= batch_size) return idx;
  // Partial Fisher-Yates: the first batch_size entries become a uniform sample without replacement.
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(batch_size);
  return idx;
}

std::vector<double> difference(const nn::ModelParams& a, const nn::ModelParams& b) {
  std::vector<double> d(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = av[i] - bv[i];
  return d;
}

std::optional<nn::ProximalTerm> proximal_for(const MethodConfig& cfg, const nn::ModelParams& anchor) {
  if (!cfg.uses_proximal() || cfg.prox_mu == 0.0) return std::nullopt;
  return nn::ProximalTerm{&anchor, cfg.prox_mu};
}

bool is_uda(Method m) { return m == Method::FedAvgUDA || m == Method::FedProxUDA; }

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::FedAvgSup: return "fedavg";
    case Method::FedProxSup: return "fedprox";
    case Method::FedAvgFixMatch: return "fedavg_fixmatch";
    case Method::FedAvgUDA: return "fedavg_uda";
    case Method::FedProxFixMatch: return "fedprox_fixmatch";
    case Method::FedProxUDA: return "fedprox_uda";
    case Method::FedLabel: return "fedlabel";
  }
  return "unknown";
}

std::optional<Method> parse_method(std::string_view name) {
  for (Method m : {Method::FedAvgSup, Method::FedProxSup, Method::FedAvgFixMatch, Method::FedAvgUDA,
                   Method::FedProxFixMatch, Method::FedProxUDA, Method::FedLabel}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

bool MethodConfig::uses_proximal() const {
  return method == Method::FedProxSup || method == Method::FedProxFixMatch || method == Method::FedProxUDA;
}

void MethodConfig::validate() const {
  ssl.validate();
  if (tau == 0) throw ConfigError("method.tau must be >= 1");
  if (uses_unlabeled() && tau_prime == 0) throw ConfigError("method.tau_prime must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("method.lr must be >= 0");
  if (batch_size == 0) throw ConfigError("method.batch_size must be >= 1");
  if (prox_mu < 0.0) throw ConfigError("method.prox_mu must be >= 0");
  if (prox_mu > 0.0 && !uses_proximal()) throw ConfigError("method.prox_mu > 0 requires a FedProx method");
  if (!(uda_temperature > 0.0)) throw ConfigError("method.uda_temperature must be > 0");
}

std::vector<std::size_t> sample_clients(std::size_t clients, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("participation must be in (0, 1]");
  // Guard so 0.3 * 20 selects 6, not 7.
  const auto m = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(clients) - 1e-9)), 1, clients);
  auto chosen = draw_batch(clients, m, rng);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SupervisedResult supervised_local_update(const nn::ModelParams& global, const data::ClientDataset& client,
                                         const MethodConfig& cfg, Rng& rng) {
  SupervisedResult out;
  out.local = global;
  const auto& labeled = client.labeled;
  if (labeled.size() == 0) {
    out.delta.assign(global.size(), 0.0);
    return out;
  }
  nn::LossSpec spec;
  spec.proximal = proximal_for(cfg, global);
  double loss_sum = 0.0;
  for (std::size_t step = 0; step < cfg.tau; ++step) {
    const auto rows = draw_batch(labeled.size(), cfg.batch_size, rng);
    nn::Batch batch;
    batch.inputs.resize(static_cast<Eigen::Index>(rows.size()), labeled.features.cols());
    batch.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      batch.inputs.row(static_cast<Eigen::Index>(r)) = labeled.features.row(static_cast<Eigen::Index>(rows[r]));
      batch.labels.push_back(labeled.labels[rows[r]]);
    }
    const auto lg = nn::backward(out.local, batch, spec);
    loss_sum += lg.loss.ce;
    nn::sgd_step_inplace(out.local, lg.grad, cfg.lr);
  }
  out.mean_loss = loss_sum / static_cast<double>(cfg.tau);
  out.delta = difference(out.local, global);
  return out;
}

UnsupervisedResult semi_supervised_local_update(const nn::ModelParams& global, const nn::ModelParams& local,
                                                const data::ClientDataset& client, const MethodConfig& cfg,
                                                const data::Augmenter& augmenter, Rng& rng,
                                                std::vector<ssl::PseudoLabelDecision>* decisions_out) {
  UnsupervisedResult out;
  out.stats.unlabeled_count = client.unlabeled.size();
  const auto& features = client.unlabeled.features();
  auto decisions = ssl::decide_all(global, local, features, cfg.ssl);

  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& d = decisions[i];
    if (!d.accepted()) continue;
    accepted.push_back(i);
    if (static_cast<int>(*d.label) == data::QuarantineAudit::label(client.unlabeled, i)) ++out.stats.pseudo_correct;
    if (d.kl_active) ++out.stats.kl_active_count;
    out.stats.lambda_sum += d.lambda;
  }
  out.stats.accepted_unlabeled_count = accepted.size();

  if (accepted.empty()) {
    out.delta.assign(global.size(), 0.0);
  } else {
    nn::ModelParams w_u = global;
    nn::LossSpec spec;
    spec.proximal = proximal_for(cfg, global);
    std::vector<std::size_t> rows;
    std::vector<ssl::PseudoLabelDecision> batch_decisions;
    for (std::size_t step = 0; step < cfg.tau_prime; ++step) {
      const auto pick = draw_batch(accepted.size(), cfg.batch_size, rng);
      rows.clear();
      batch_decisions.clear();
      for (auto p : pick) {
        rows.push_back(accepted[p]);
        batch_decisions.push_back(decisions[accepted[p]]);
      }
      auto res = ssl::semi_supervised_batch_loss(w_u, features, rows, batch_decisions, augmenter, rng, spec);
      out.stats.unsup_ce += res.loss.ce;
      out.stats.unsup_kl += res.loss.kl;
      nn::sgd_step_inplace(w_u, res.grad, cfg.lr);
    }
    out.stats.unsup_ce /= static_cast<double>(cfg.tau_prime);
    out.stats.unsup_kl /= static_cast<double>(cfg.tau_prime);
    out.delta = difference(w_u, global);
  }
  if (decisions_out) *decisions_out = std::move(decisions);
  return out;
}

UnsupervisedResult baseline_unsup_update(const nn::ModelParams& global, const nn::ModelParams& local,
                                         const data::ClientDataset& client, const MethodConfig& cfg,
                                         const data::Augmenter& augmenter, Rng& rng) {
  UnsupervisedResult out;
  out.stats.unlabeled_count = client.unlabeled.size();
  const auto& features = client.unlabeled.features();
  const nn::Matrix weak = augmenter.weak_rows(features, rng);
  const auto targets = ssl::teacher_targets(local, weak, cfg.ssl.beta);

  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i].accepted()) continue;
    accepted.push_back(i);
    if (static_cast<int>(*targets[i].label) == data::QuarantineAudit::label(client.unlabeled, i)) {
      ++out.stats.pseudo_correct;
    }
  }
  out.stats.accepted_unlabeled_count = accepted.size();
  if (accepted.empty()) {
    out.delta.assign(global.size(), 0.0);
    return out;
  }

  const bool uda = is_uda(cfg.method);
  const auto classes = static_cast<Eigen::Index>(global.class_count());
  nn::ModelParams w_u = global;
  nn::LossSpec spec;
  spec.proximal = proximal_for(cfg, global);
  for (std::size_t step = 0; step < cfg.tau_prime; ++step) {
    const auto pick = draw_batch(accepted.size(), cfg.batch_size, rng);
    nn::Matrix clean(static_cast<Eigen::Index>(pick.size()), features.cols());
    for (std::size_t r = 0; r < pick.size(); ++r) {
      clean.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(accepted[pick[r]]));
    }
    nn::Batch batch;
    batch.inputs = augmenter.strong_rows(clean, rng);
    batch.labels.assign(pick.size(), nn::kNoLabel);
    if (uda) {
      batch.soft_targets.resize(static_cast<Eigen::Index>(pick.size()), classes);
      batch.soft_weights.assign(pick.size(), 1.0);
    }
    for (std::size_t r = 0; r < pick.size(); ++r) {
      const auto& t = targets[accepted[pick[r]]];
      if (uda) {
        const auto sharp = ssl::sharpen(t.probs, cfg.uda_temperature);
        for (Eigen::Index j = 0; j < classes; ++j) {
          batch.soft_targets(static_cast<Eigen::Index>(r), j) = sharp[static_cast<std::size_t>(j)];
        }
      } else {
        batch.labels[r] = static_cast<int>(*t.label);
      }
    }
    const auto lg = nn::backward(w_u, batch, spec);
    out.stats.unsup_ce += uda ? lg.loss.soft : lg.loss.ce;
    nn::sgd_step_inplace(w_u, lg.grad, cfg.lr);
  }
  out.stats.unsup_ce /= static_cast<double>(cfg.tau_prime);
  out.delta = difference(w_u, global);
  return out;
}

ClientUpdate client_round(const nn::ModelParams& global, const data::ClientDataset& client, const MethodConfig& cfg,
                          const data::Augmenter& augmenter, std::uint64_t seed, std::size_t round,
                          const DecisionObserver& observer) {
  ClientUpdate update;
  update.client_id = client.id;

  Rng sup_rng = make_rng(seed, {round, client.id, kSupervisedStream});
  auto sup = supervised_local_update(global, client, cfg, sup_rng);
  update.delta = std::move(sup.delta);

  UnsupervisedResult unsup;
  unsup.stats.unlabeled_count = client.unlabeled.size();
  if (cfg.uses_unlabeled() && client.unlabeled.size() > 0) {
    Rng unsup_rng = make_rng(seed, {round, client.id, kUnlabeledStream});
    if (cfg.method == Method::FedLabel) {
      std::vector<ssl::PseudoLabelDecision> decisions;
      unsup = semi_supervised_local_update(global, sup.local, client, cfg, augmenter, unsup_rng,
                                           observer ? &decisions : nullptr);
      if (observer) observer(round, client, decisions);
    } else {
      unsup = baseline_unsup_update(global, sup.local, client, cfg, augmenter, unsup_rng);
    }
    if (unsup.stats.accepted_unlabeled_count > 0) {
      for (std::size_t i = 0; i < update.delta.size(); ++i) update.delta[i] += unsup.delta[i];
    }
  }
  update.stats = unsup.stats;
  update.stats.labeled_count = client.labeled.size();
  update.stats.sup_loss = sup.mean_loss;
  update.weight = update.stats.labeled_count + update.stats.accepted_unlabeled_count;
  return update;
}

std::vector<double> aggregate(ServerState& server, std::span<const ClientUpdate> updates) {
  std::vector<const ClientUpdate*> ordered;
  ordered.reserve(updates.size());
  for (const auto& u : updates) ordered.push_back(&u);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });

  std::size_t total = 0;
  for (const auto* u : ordered) {
    if (u->delta.size() != server.global.size()) throw ConfigError("aggregate: delta length mismatch");
    total += u->weight;
  }
  std::vector<double> weights(ordered.size(), 0.0);
  if (total == 0) {
    std::cerr << "warning: round " << server.round << ": all aggregation weights are zero; global model unchanged\n";
    return weights;
  }
  std::vector<double> step(server.global.size(), 0.0);
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    weights[k] = static_cast<double>(ordered[k]->weight) / static_cast<double>(total);
    if (weights[k] == 0.0) continue;
    const auto& d = ordered[k]->delta;
    for (std::size_t i = 0; i < step.size(); ++i) step[i] += weights[k] * d[i];
  }
  auto w = server.global.values();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += step[i];
  return weights;
}

}  // namespace fedssl::federation
