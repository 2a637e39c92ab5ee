#include "fedssl/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedssl/errors.hpp"
#include "fedssl/nn/loss.hpp"

namespace fedssl::nn {
namespace {

// Post-activation outputs of every layer; the last entry holds softmax probabilities.
struct ForwardCache {
  std::vector<Matrix> activations;
};

ForwardCache run_forward(const ModelParams& params, const Matrix& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != params.input_width()) {
    throw ConfigError("input width " + std::to_string(inputs.cols()) + " does not match model input width " +
                      std::to_string(params.input_width()));
  }
  ForwardCache cache;
  cache.activations.reserve(params.layer_count());
  const Matrix* prev = &inputs;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    Matrix z = (*prev) * params.weights(l).transpose();
    z.rowwise() += params.bias(l).transpose();
    if (l + 1 < params.layer_count()) {
      z = z.array().tanh().matrix();
    } else {
      softmax_rows(z);
    }
    cache.activations.push_back(std::move(z));
    prev = &cache.activations.back();
  }
  return cache;
}

// Accumulates dLoss/dparams into grad given dLoss/dlogits of the output layer.
void run_backward(const ModelParams& params, const Matrix& inputs, const ForwardCache& cache, Matrix dz,
                  Gradient& grad) {
  for (std::size_t l = params.layer_count(); l-- > 0;) {
    const Matrix& a_prev = (l == 0) ? inputs : cache.activations[l - 1];
    grad.weights(l).noalias() += dz.transpose() * a_prev;
    grad.bias(l) += dz.colwise().sum().transpose();
    if (l == 0) break;
    Matrix da = dz * params.weights(l);
    const Matrix& a = cache.activations[l - 1];
    dz = (da.array() * (1.0 - a.array().square())).matrix();
  }
}

void validate(const ModelParams& params, const Batch& batch) {
  const auto n = batch.inputs.rows();
  if (n == 0) throw ConfigError("backward: empty batch");
  if (batch.labels.size() != static_cast<std::size_t>(n)) throw ConfigError("backward: labels/input row mismatch");
  const auto classes = static_cast<int>(params.class_count());
  for (int y : batch.labels) {
    if (y != kNoLabel && (y < 0 || y >= classes)) throw ConfigError("backward: label out of range");
  }
  if (batch.has_kl()) {
    if (batch.kl_inputs.rows() != n || batch.kl_targets.rows() != n ||
        batch.kl_weights.size() != static_cast<std::size_t>(n) || batch.kl_targets.cols() != classes) {
      throw ConfigError("backward: consistency term shape mismatch");
    }
  }
  if (batch.has_soft()) {
    if (batch.soft_targets.rows() != n || batch.soft_weights.size() != static_cast<std::size_t>(n) ||
        batch.soft_targets.cols() != classes) {
      throw ConfigError("backward: soft-target term shape mismatch");
    }
  }
}

struct TermResult {
  Matrix dz;
};

// Hard CE plus soft-target KL(q || p) share the forward pass on `inputs`.
TermResult primary_terms(const Batch& batch, const Matrix& probs, double inv_n, LossBreakdown& out, bool want_grad) {
  TermResult r;
  if (want_grad) r.dz = Matrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    if (y != kNoLabel) {
      out.ce += -std::log(std::max(probs(i, y), kLogEpsilon)) * inv_n;
      if (want_grad) {
        r.dz.row(i) += probs.row(i) * inv_n;
        r.dz(i, y) -= inv_n;
      }
    }
    if (batch.has_soft()) {
      const double w = batch.soft_weights[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      double kl = 0.0;
      double mass = 0.0;
      for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        const double q = batch.soft_targets(i, j);
        mass += q;
        if (q > 0.0) kl += q * (std::log(q) - std::log(std::max(probs(i, j), kLogEpsilon)));
      }
      out.soft += w * kl * inv_n;
      if (want_grad) r.dz.row(i) += w * inv_n * (mass * probs.row(i) - batch.soft_targets.row(i));
    }
  }
  return r;
}

// KL(p || q) with p = s(w, kl_inputs): d/dz_j = p_j (log(p_j / q_j) - KL).
Matrix consistency_term(const Batch& batch, const Matrix& probs, double inv_n, LossBreakdown& out, bool want_grad) {
  Matrix dz;
  if (want_grad) dz = Matrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double w = batch.kl_weights[static_cast<std::size_t>(i)];
    if (w == 0.0) continue;
    double kl = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      if (p > 0.0) kl += p * (std::log(p) - std::log(std::max(batch.kl_targets(i, j), kLogEpsilon)));
    }
    out.kl += w * kl * inv_n;
    if (!want_grad) continue;
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double p = probs(i, j);
      if (p <= 0.0) continue;
      const double log_ratio = std::log(p) - std::log(std::max(batch.kl_targets(i, j), kLogEpsilon));
      dz(i, j) = w * inv_n * p * (log_ratio - kl);
    }
  }
  return dz;
}

LossAndGradient compute(const ModelParams& params, const Batch& batch, const LossSpec& spec, bool want_grad) {
  validate(params, batch);
  LossAndGradient result;
  if (want_grad) result.grad = Gradient(params.layers());
  const double inv_n = 1.0 / static_cast<double>(batch.rows());

  {
    ForwardCache cache = run_forward(params, batch.inputs);
    TermResult r = primary_terms(batch, cache.activations.back(), inv_n, result.loss, want_grad);
    if (want_grad) run_backward(params, batch.inputs, cache, std::move(r.dz), result.grad);
  }
  if (batch.has_kl()) {
    ForwardCache cache = run_forward(params, batch.kl_inputs);
    Matrix dz = consistency_term(batch, cache.activations.back(), inv_n, result.loss, want_grad);
    if (want_grad) run_backward(params, batch.kl_inputs, cache, std::move(dz), result.grad);
  }
  if (spec.proximal && spec.proximal->mu != 0.0) {
    const ModelParams& anchor = *spec.proximal->anchor;
    if (!anchor.same_shape(params)) throw ConfigError("proximal anchor shape mismatch");
    const double mu = spec.proximal->mu;
    const auto w = params.values();
    const auto a = anchor.values();
    double sq = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - a[i];
      sq += d * d;
      if (want_grad) result.grad.values()[i] += mu * d;
    }
    result.loss.proximal = 0.5 * mu * sq;
  }
  return result;
}

}  // namespace

void softmax_rows(Matrix& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row /= row.sum();
  }
}

ProbVector forward(const ModelParams& params, std::span<const double> input) {
  Matrix x(1, static_cast<Eigen::Index>(input.size()));
  std::copy(input.begin(), input.end(), x.data());
  Matrix p = forward_batch(params, x);
  return ProbVector(std::vector<double>(p.data(), p.data() + p.size()));
}

Matrix forward_batch(const ModelParams& params, const Matrix& inputs) {
  ForwardCache cache = run_forward(params, inputs);
  return std::move(cache.activations.back());
}

LossBreakdown evaluate_loss(const ModelParams& params, const Batch& batch, const LossSpec& spec) {
  return compute(params, batch, spec, false).loss;
}

LossAndGradient backward(const ModelParams& params, const Batch& batch, const LossSpec& spec) {
  return compute(params, batch, spec, true);
}

void sgd_step_inplace(ModelParams& params, const Gradient& grad, double lr) {
  if (!params.same_shape(grad)) throw ConfigError("sgd_step: gradient shape mismatch");
  if (lr < 0.0) throw ConfigError("sgd_step: learning rate must be non-negative");
  if (!grad.all_finite()) throw NumericError("sgd_step: non-finite gradient entry");
  auto w = params.values();
  const auto g = grad.values();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

ModelParams sgd_step(const ModelParams& params, const Gradient& grad, double lr) {
  ModelParams out = params;
  sgd_step_inplace(out, grad, lr);
  return out;
}

double finite_diff_check(const ModelParams& params, const Batch& batch, const LossSpec& spec, std::size_t min_coords,
                         double step) {
  const LossAndGradient analytic = backward(params, batch, spec);
  const std::size_t q = params.size();
  const std::size_t count = std::min(q, std::max<std::size_t>(min_coords, 1));
  ModelParams probe = params;
  double worst = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    // Evenly spaced with an odd offset so both weights and biases of every layer are hit.
    const std::size_t idx =
        std::min(q - 1, (k * q) / count + ((k * 7) % std::max<std::size_t>(q / count, 1)));
    const double orig = params.values()[idx];
    probe.values()[idx] = orig + step;
    const double up = evaluate_loss(probe, batch, spec).total();
    probe.values()[idx] = orig - step;
    const double down = evaluate_loss(probe, batch, spec).total();
    probe.values()[idx] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.grad.values()[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace fedssl::nn
