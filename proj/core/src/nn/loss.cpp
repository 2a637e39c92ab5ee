#include "fedssl/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "fedssl/errors.hpp"

namespace fedssl::nn {

double cross_entropy(const ProbVector& pred, std::size_t label) {
  if (label >= pred.size()) throw ConfigError("cross_entropy: label out of range");
  return -std::log(std::max(pred[label], kLogEpsilon));
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ConfigError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kLogEpsilon)));
  }
  // Rounding can leave a tiny negative value when p == q.
  return std::max(kl, 0.0);
}

}  // namespace fedssl::nn
