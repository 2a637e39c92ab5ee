#include "fedssl/nn/metrics.hpp"

#include "fedssl/errors.hpp"
#include "fedssl/nn/network.hpp"

namespace fedssl::nn {

double top1_accuracy(const ModelParams& params, const Matrix& inputs, std::span<const int> labels) {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size()) throw ConfigError("top1_accuracy: row/label mismatch");
  if (labels.empty()) return 0.0;
  const Matrix probs = forward_batch(params, inputs);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    probs.row(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace fedssl::nn
