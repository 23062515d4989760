#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ladder/tensor.hpp"

namespace ladder {

struct SgdConfig {
    float learning_rate = 0.01f;
    float momentum = 0.5f;
    float weight_decay = 0.0f;
    std::size_t batch_size = 64;
    std::size_t epochs = 100;

    /// Throws a configuration error when a field is out of range.
    void validate() const;

    /// Adversarial-training hyper-parameters for the MNIST/LeNet setting.
    static SgdConfig mnist() { return {0.01f, 0.5f, 0.0f, 64, 100}; }
    static SgdConfig svhn() { return {0.001f, 0.9f, 5e-4f, 128, 100}; }
    static SgdConfig celeba() { return {0.01f, 0.5f, 5e-4f, 64, 100}; }
    static SgdConfig cifar10() { return {0.001f, 0.9f, 5e-4f, 128, 100}; }
};

/// Momentum buffers, one per parameter, created lazily on the first step.
struct SgdState {
    std::vector<Tensor> velocity;
};

/// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
void sgd_step(std::span<Tensor> params, std::span<const Tensor> grads, const SgdConfig& cfg, SgdState& state);

}  // namespace ladder
