#include "rada/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rada {

OptimizerState OptimizerState::for_params(std::span<const Tensor> params,
                                          double learning_rate,
                                          double momentum) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  s.velocities.reserve(params.size());
  for (const auto& p : params) s.velocities.emplace_back(p.shape(), 0.0);
  return s;
}

void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads,
                       OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.velocities.size()) {
    throw std::invalid_argument(
        "sgd_momentum_step: " + std::to_string(params.size()) + " params, " +
        std::to_string(grads.size()) + " grads, " +
        std::to_string(state.velocities.size()) + " velocity buffers");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != grads[k].shape() ||
        params[k].shape() != state.velocities[k].shape()) {
      throw std::invalid_argument(
          "sgd_momentum_step: shape mismatch for parameter " + std::to_string(k) +
          ": param " + to_string(params[k].shape()) + ", grad " +
          to_string(grads[k].shape()) + ", velocity " +
          to_string(state.velocities[k].shape()));
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].raw();
    auto& v = state.velocities[k].raw();
    const auto& g = grads[k].raw();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = state.momentum * v[i] + g[i];
      p[i] -= state.learning_rate * v[i];
    }
  }
}

}  // namespace rada
