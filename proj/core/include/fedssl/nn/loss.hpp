#pragma once

#include <cstddef>

#include "fedssl/nn/model.hpp"

namespace fedssl::nn {

/// Floor applied inside every log so saturated softmax outputs never produce NaN/Inf.
inline constexpr double kLogEpsilon = 1e-12;

/// -log(pred[label]) with the probability clamped to kLogEpsilon.
double cross_entropy(const ProbVector& pred, std::size_t label);

/// KL(p || q) = sum_i p_i log(p_i / q_i), with 0 log 0 = 0 and q clamped to kLogEpsilon.
/// Throws ConfigError on length mismatch.
double kl_divergence(const ProbVector& p, const ProbVector& q);

}  // namespace fedssl::nn
