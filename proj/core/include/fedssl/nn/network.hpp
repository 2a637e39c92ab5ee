#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fedssl/nn/model.hpp"

namespace fedssl::nn {

/// Label value meaning "no hard-label cross-entropy term for this row".
inline constexpr int kNoLabel = -1;

/// A mini-batch for one gradient evaluation. Row i of every populated matrix refers to sample i,
/// and the loss is the mean over rows of
///
///   CE(s(w, inputs_i), labels_i)
///   + kl_weights_i * KL(s(w, kl_inputs_i) || kl_targets_i)
///   + soft_weights_i * KL(soft_targets_i || s(w, inputs_i))
///
/// The KL and soft terms are optional (leave their matrices empty). Targets are constants:
/// no gradient flows into them.
struct Batch {
  Matrix inputs;
  std::vector<int> labels;

  Matrix kl_inputs;
  Matrix kl_targets;
  std::vector<double> kl_weights;

  Matrix soft_targets;
  std::vector<double> soft_weights;

  std::size_t rows() const { return static_cast<std::size_t>(inputs.rows()); }
  bool has_kl() const { return kl_inputs.rows() > 0; }
  bool has_soft() const { return soft_targets.rows() > 0; }
};

/// mu/2 * ||w - anchor||^2 added to the batch loss (FedProx local objective).
struct ProximalTerm {
  const ModelParams* anchor = nullptr;
  double mu = 0.0;
};

/// Loss composition beyond what the batch carries.
struct LossSpec {
  std::optional<ProximalTerm> proximal;
};

struct LossBreakdown {
  double ce = 0.0;
  double kl = 0.0;
  double soft = 0.0;
  double proximal = 0.0;

  double total() const { return ce + kl + soft + proximal; }
};

struct LossAndGradient {
  LossBreakdown loss;
  Gradient grad;
};

/// Softmax of the final-layer activations for one input. Throws ConfigError on width mismatch.
ProbVector forward(const ModelParams& params, std::span<const double> input);

/// Row-wise softmax outputs for a batch of inputs.
Matrix forward_batch(const ModelParams& params, const Matrix& inputs);

/// In-place row-wise softmax.
void softmax_rows(Matrix& logits);

/// Mean batch loss without the gradient.
LossBreakdown evaluate_loss(const ModelParams& params, const Batch& batch, const LossSpec& spec = {});

/// Gradient of the mean batch loss by backpropagation. Throws ConfigError on an empty or
/// inconsistent batch.
LossAndGradient backward(const ModelParams& params, const Batch& batch, const LossSpec& spec = {});

/// params - lr * grad. Throws NumericError if the gradient has non-finite entries and
/// ConfigError for negative lr or shape mismatch.
ModelParams sgd_step(const ModelParams& params, const Gradient& grad, double lr);
/// In-place variant used by the training loops.
void sgd_step_inplace(ModelParams& params, const Gradient& grad, double lr);

/// Largest relative discrepancy between backward() and central finite differences over a
/// deterministic, evenly spaced subsample of at least `min_coords` coordinates (all
/// coordinates if the model is smaller). Relative error is |a - n| / max(|a|, |n|, 1e-6).
double finite_diff_check(const ModelParams& params, const Batch& batch, const LossSpec& spec = {},
                         std::size_t min_coords = 64, double step = 1e-4);

}  // namespace fedssl::nn
