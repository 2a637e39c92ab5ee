#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedssl/data/augment.hpp"
#include "fedssl/nn/network.hpp"
#include "fedssl/ssl/pseudo_label.hpp"

namespace fedssl::ssl {

struct SemiSupervisedLoss {
  nn::LossBreakdown loss;
  nn::Gradient grad;
  std::size_t accepted = 0;
};

/// Assembles the pseudo-labelled batch for the FedLabel unlabeled objective. Only accepted rows
/// are kept: CE targets the pseudo-label on the strongly augmented input, the consistency term
/// compares s(w, clean input) with the constant s^{-*} and is weighted by lambda (zero when
/// kl_active is false). Returns nullopt if every row was discarded.
std::optional<nn::Batch> build_fedlabel_batch(const nn::Matrix& unlabeled, std::span<const std::size_t> rows,
                                              std::span<const PseudoLabelDecision> decisions,
                                              const data::Augmenter& augmenter, Rng& rng);

/// Mean over accepted samples of CE(w_u on psi(x), y_hat) + lambda * KL(s(w_u, x) || s^{-*}).
/// `decisions[i]` belongs to row `rows[i]` of `unlabeled`. All discarded -> zero loss, zero
/// gradient, accepted = 0.
SemiSupervisedLoss semi_supervised_batch_loss(const nn::ModelParams& w_u, const nn::Matrix& unlabeled,
                                              std::span<const std::size_t> rows,
                                              std::span<const PseudoLabelDecision> decisions,
                                              const data::Augmenter& augmenter, Rng& rng,
                                              const nn::LossSpec& spec = {});

/// Single-model decision used by the FixMatch/UDA baselines: the teacher's output on a weakly
/// augmented view, kept when its max exceeds beta.
struct TeacherTarget {
  ProbVector probs;
  std::optional<std::size_t> label;

  bool accepted() const { return label.has_value(); }
};

std::vector<TeacherTarget> teacher_targets(const nn::ModelParams& teacher, const nn::Matrix& weak_views, double beta);

/// Temperature sharpening p_i^{1/T} / sum_j p_j^{1/T}.
ProbVector sharpen(const ProbVector& p, double temperature);

}  // namespace fedssl::ssl
