#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedssl/nn/model.hpp"

namespace fedssl::ssl {

using nn::ProbVector;

enum class ConfidenceMetric { Variance, NegEntropy };
enum class SelectionMode { ConfidenceSelect, LocalOnly, GlobalOnly };
enum class ModelChoice { Global, Local };

std::string_view to_string(ConfidenceMetric m);
std::string_view to_string(SelectionMode m);
std::string_view to_string(ModelChoice m);

struct SslConfig {
  /// Pseudo-label threshold: a label is kept only if max s* > beta (strict).
  double beta = 0.4;
  /// Upper bound of the global-local consistency weight.
  double lambda0 = 1.0;
  ConfidenceMetric confidence = ConfidenceMetric::Variance;
  SelectionMode selection = SelectionMode::ConfidenceSelect;

  void validate() const;
};

/// Population variance (1/N) sum_i (p_i - 1/N)^2. Zero for the uniform vector.
double confidence_variance(const ProbVector& p);
/// ln N - H(p). Zero for the uniform vector, ln N for a one-hot vector.
double confidence_neg_entropy(const ProbVector& p);
double confidence(const ProbVector& p, ConfidenceMetric metric);

/// Global and local model outputs for one unlabeled sample, with their confidences.
struct LogitPair {
  ProbVector global_probs;
  ProbVector local_probs;
  double global_conf = 0.0;
  double local_conf = 0.0;

  static LogitPair make(ProbVector global_probs, ProbVector local_probs, ConfidenceMetric metric);
};

/// Outcome of choosing between the two models: s* and the discarded s^{-*}.
struct Selection {
  ModelChoice selected = ModelChoice::Global;
  ProbVector s_star;
  ProbVector s_minus_star;
  double h_star = 0.0;
  double h_minus_star = 0.0;
};

/// ConfidenceSelect picks the more confident model, Global on ties; the forced modes ignore
/// confidences.
Selection select_logit(const LogitPair& pair, SelectionMode mode);

/// argmax s* when max s* > beta, otherwise nullopt (discard).
std::optional<std::size_t> pseudo_label(const ProbVector& s_star, double beta);

/// lambda0 * h(s^{-*}) / h(s*), capped at lambda0; 0 when h(s*) == 0. The cap only binds in the
/// forced selection modes, where the discarded model may be the more confident one.
double lambda_weight(const Selection& selection, double lambda0);

struct PseudoLabelDecision {
  ModelChoice selected = ModelChoice::Global;
  ProbVector s_star;
  ProbVector s_minus_star;
  std::optional<std::size_t> label;
  /// True iff a label was assigned and argmax s^{-*} agrees with it.
  bool kl_active = false;
  /// Consistency weight; zero unless kl_active.
  double lambda = 0.0;

  bool accepted() const { return label.has_value(); }
};

PseudoLabelDecision decide(const LogitPair& pair, const SslConfig& config);

/// Decisions for every row of `unlabeled`, from the frozen global and local models on clean
/// (unaugmented) inputs.
std::vector<PseudoLabelDecision> decide_all(const nn::ModelParams& global, const nn::ModelParams& local,
                                            const nn::Matrix& unlabeled, const SslConfig& config);

}  // namespace fedssl::ssl
