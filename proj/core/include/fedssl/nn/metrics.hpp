#pragma once

#include <span>

#include "fedssl/nn/model.hpp"

namespace fedssl::nn {

/// Top-1 accuracy of `params` on the rows of `inputs`; 0 for an empty set.
double top1_accuracy(const ModelParams& params, const Matrix& inputs, std::span<const int> labels);

}  // namespace fedssl::nn
