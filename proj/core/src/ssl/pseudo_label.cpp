#include "fedssl/ssl/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedssl/errors.hpp"
#include "fedssl/nn/network.hpp"

namespace fedssl::ssl {

std::string_view to_string(ConfidenceMetric m) {
  return m == ConfidenceMetric::Variance ? "variance" : "neg_entropy";
}

std::string_view to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::ConfidenceSelect: return "confidence";
    case SelectionMode::LocalOnly: return "local_only";
    case SelectionMode::GlobalOnly: return "global_only";
  }
  return "unknown";
}

std::string_view to_string(ModelChoice m) { return m == ModelChoice::Global ? "global" : "local"; }

void SslConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("ssl.beta must be in [0, 1]");
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw ConfigError("ssl.lambda0 must be >= 0");
}

double confidence_variance(const ProbVector& p) {
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (double v : p.values()) acc += (v - 1.0 / n) * (v - 1.0 / n);
  return acc / n;
}

double confidence_neg_entropy(const ProbVector& p) {
  double h = 0.0;
  for (double v : p.values()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(0.0, std::log(static_cast<double>(p.size())) - h);
}

double confidence(const ProbVector& p, ConfidenceMetric metric) {
  return metric == ConfidenceMetric::Variance ? confidence_variance(p) : confidence_neg_entropy(p);
}

LogitPair LogitPair::make(ProbVector global_probs, ProbVector local_probs, ConfidenceMetric metric) {
  if (global_probs.size() != local_probs.size()) throw ConfigError("LogitPair: class count mismatch");
  LogitPair pair;
  pair.global_conf = confidence(global_probs, metric);
  pair.local_conf = confidence(local_probs, metric);
  pair.global_probs = std::move(global_probs);
  pair.local_probs = std::move(local_probs);
  return pair;
}

Selection select_logit(const LogitPair& pair, SelectionMode mode) {
  ModelChoice choice = ModelChoice::Global;
  switch (mode) {
    case SelectionMode::ConfidenceSelect:
      choice = pair.local_conf > pair.global_conf ? ModelChoice::Local : ModelChoice::Global;
      break;
    case SelectionMode::LocalOnly: choice = ModelChoice::Local; break;
    case SelectionMode::GlobalOnly: choice = ModelChoice::Global; break;
  }
  Selection s;
  s.selected = choice;
  if (choice == ModelChoice::Global) {
    s.s_star = pair.global_probs;
    s.s_minus_star = pair.local_probs;
    s.h_star = pair.global_conf;
    s.h_minus_star = pair.local_conf;
  } else {
    s.s_star = pair.local_probs;
    s.s_minus_star = pair.global_probs;
    s.h_star = pair.local_conf;
    s.h_minus_star = pair.global_conf;
  }
  return s;
}

std::optional<std::size_t> pseudo_label(const ProbVector& s_star, double beta) {
  if (s_star.size() == 0 || !(s_star.max() > beta)) return std::nullopt;
  return s_star.argmax();
}

double lambda_weight(const Selection& selection, double lambda0) {
  if (!(selection.h_star > 0.0)) return 0.0;
  return lambda0 * std::min(1.0, selection.h_minus_star / selection.h_star);
}

PseudoLabelDecision decide(const LogitPair& pair, const SslConfig& config) {
  Selection sel = select_logit(pair, config.selection);
  PseudoLabelDecision d;
  d.selected = sel.selected;
  d.label = pseudo_label(sel.s_star, config.beta);
  d.kl_active = d.label.has_value() && sel.s_minus_star.argmax() == *d.label;
  d.lambda = d.kl_active ? lambda_weight(sel, config.lambda0) : 0.0;
  if (d.lambda > config.lambda0) throw std::logic_error("decide: consistency weight exceeds lambda0");
  d.s_star = std::move(sel.s_star);
  d.s_minus_star = std::move(sel.s_minus_star);
  return d;
}

std::vector<PseudoLabelDecision> decide_all(const nn::ModelParams& global, const nn::ModelParams& local,
                                            const nn::Matrix& unlabeled, const SslConfig& config) {
  std::vector<PseudoLabelDecision> out;
  if (unlabeled.rows() == 0) return out;
  const nn::Matrix pg = nn::forward_batch(global, unlabeled);
  const nn::Matrix pl = nn::forward_batch(local, unlabeled);
  out.reserve(static_cast<std::size_t>(unlabeled.rows()));
  const auto n = static_cast<std::size_t>(pg.cols());
  for (Eigen::Index i = 0; i < pg.rows(); ++i) {
    ProbVector g(std::vector<double>(pg.row(i).data(), pg.row(i).data() + n));
    ProbVector l(std::vector<double>(pl.row(i).data(), pl.row(i).data() + n));
    out.push_back(decide(LogitPair::make(std::move(g), std::move(l), config.confidence), config));
  }
  return out;
}

}  // namespace fedssl::ssl
