#pragma once

#include <span>
#include <vector>

#include "rada/tensor.hpp"

namespace rada {

/// Heavy-ball SGD state. One velocity buffer per trainable parameter.
struct OptimizerState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::vector<Tensor> velocities;

  /// Zero velocities shaped like `params`. Rejects lr <= 0 or momentum
  /// outside [0, 1).
  static OptimizerState for_params(std::span<const Tensor> params,
                                   double learning_rate, double momentum);
};

/// v <- momentum * v + g;  p <- p - lr * v
void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads,
                       OptimizerState& state);

}  // namespace rada
