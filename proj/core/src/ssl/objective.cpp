#include "fedssl/ssl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedssl/errors.hpp"

namespace fedssl::ssl {

std::optional<nn::Batch> build_fedlabel_batch(const nn::Matrix& unlabeled, std::span<const std::size_t> rows,
                                              std::span<const PseudoLabelDecision> decisions,
                                              const data::Augmenter& augmenter, Rng& rng) {
  if (rows.size() != decisions.size()) throw ConfigError("fedlabel batch: rows/decisions length mismatch");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (decisions[i].accepted()) keep.push_back(i);
  }
  if (keep.empty()) return std::nullopt;

  const auto n = static_cast<Eigen::Index>(keep.size());
  const auto classes = static_cast<Eigen::Index>(decisions[keep.front()].s_minus_star.size());
  nn::Batch batch;
  batch.kl_inputs.resize(n, unlabeled.cols());
  batch.kl_targets.resize(n, classes);
  batch.kl_weights.resize(keep.size());
  batch.labels.resize(keep.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = keep[static_cast<std::size_t>(r)];
    const auto& d = decisions[i];
    batch.kl_inputs.row(r) = unlabeled.row(static_cast<Eigen::Index>(rows[i]));
    const auto target = d.s_minus_star.values();
    for (Eigen::Index j = 0; j < classes; ++j) batch.kl_targets(r, j) = target[static_cast<std::size_t>(j)];
    batch.kl_weights[static_cast<std::size_t>(r)] = d.kl_active ? d.lambda : 0.0;
    batch.labels[static_cast<std::size_t>(r)] = static_cast<int>(*d.label);
  }
  batch.inputs = augmenter.strong_rows(batch.kl_inputs, rng);
  return batch;
}

SemiSupervisedLoss semi_supervised_batch_loss(const nn::ModelParams& w_u, const nn::Matrix& unlabeled,
                                              std::span<const std::size_t> rows,
                                              std::span<const PseudoLabelDecision> decisions,
                                              const data::Augmenter& augmenter, Rng& rng, const nn::LossSpec& spec) {
  SemiSupervisedLoss out;
  auto batch = build_fedlabel_batch(unlabeled, rows, decisions, augmenter, rng);
  if (!batch) {
    out.grad = nn::Gradient(w_u.layers());
    return out;
  }
  auto lg = nn::backward(w_u, *batch, spec);
  out.loss = lg.loss;
  out.grad = std::move(lg.grad);
  out.accepted = batch->rows();
  return out;
}

std::vector<TeacherTarget> teacher_targets(const nn::ModelParams& teacher, const nn::Matrix& weak_views, double beta) {
  std::vector<TeacherTarget> out;
  if (weak_views.rows() == 0) return out;
  const nn::Matrix probs = nn::forward_batch(teacher, weak_views);
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    TeacherTarget t;
    t.probs = ProbVector(std::vector<double>(probs.row(i).data(), probs.row(i).data() + probs.cols()));
    t.label = pseudo_label(t.probs, beta);
    out.push_back(std::move(t));
  }
  return out;
}

ProbVector sharpen(const ProbVector& p, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("sharpen: temperature must be > 0");
  std::vector<double> q(p.size());
  // Work in log space so tiny probabilities raised to 1/T do not underflow to an all-zero row.
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = p[i] > 0.0 ? std::log(p[i]) / temperature : -std::numeric_limits<double>::infinity();
    max_log = std::max(max_log, q[i]);
  }
  double sum = 0.0;
  for (auto& v : q) {
    v = std::exp(v - max_log);
    sum += v;
  }
  for (auto& v : q) v /= sum;
  return ProbVector(std::move(q));
}

}  // namespace fedssl::ssl
