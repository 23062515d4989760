#include "ladder/optim.hpp"

#include <cmath>
#include <string>

namespace ladder {

void SgdConfig::validate() const {
    require(learning_rate > 0.0f && std::isfinite(learning_rate), ErrorKind::configuration,
            "sgd learning_rate must be positive");
    require(momentum >= 0.0f && momentum < 1.0f, ErrorKind::configuration, "sgd momentum must lie in [0, 1)");
    require(weight_decay >= 0.0f, ErrorKind::configuration, "sgd weight_decay must be non-negative");
    require(batch_size > 0, ErrorKind::configuration, "sgd batch_size must be positive");
    require(epochs > 0, ErrorKind::configuration, "sgd epochs must be positive");
}

void sgd_step(std::span<Tensor> params, std::span<const Tensor> grads, const SgdConfig& cfg, SgdState& state) {
    require(params.size() == grads.size(), ErrorKind::dimension,
            "sgd_step: " + std::to_string(params.size()) + " params vs " + std::to_string(grads.size()) + " grads");
    if (state.velocity.empty())
        for (const Tensor& p : params) state.velocity.push_back(Tensor::zeros(p.shape()));
    require(state.velocity.size() == params.size(), ErrorKind::dimension, "sgd_step: velocity count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params[i], grads[i], "sgd_step");
        require_same_shape(params[i], state.velocity[i], "sgd_step");
        float* p = params[i].ptr();
        const float* g = grads[i].ptr();
        float* v = state.velocity[i].ptr();
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            v[j] = cfg.momentum * v[j] + g[j] + cfg.weight_decay * p[j];
            p[j] -= cfg.learning_rate * v[j];
        }
    }
}

}  // namespace ladder
