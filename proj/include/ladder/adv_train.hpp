#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ladder/data.hpp"
#include "ladder/models.hpp"
#include "ladder/optim.hpp"

namespace ladder {

enum class Regularizer { none, trades };

struct AdvTrainConfig {
    float alpha_mix = 0.5f;
    SgdConfig sgd = SgdConfig::mnist();
    Regularizer regularizer = Regularizer::none;
    float trades_lambda = 1.0f;
    float trades_epsilon = 0.3f;  // FGSM budget for the TRADES inner example
    bool fine_tune = false;       // start from the vanilla weights instead of a fresh init

    void validate() const;
};

/// alpha * clean + (1 - alpha) * adv
float mixed_loss(float clean_loss, float adv_loss, float alpha_mix);
Var mixed_loss(const Var& clean_loss, const Var& adv_loss, float alpha_mix);

/// CE(f(x), y) + lambda * KL(softmax f(x) || softmax f(x_adv)).
Var trades_loss(const Classifier& model, std::span<const Var> params, const Var& x, const Var& x_adv,
                std::span<const int> labels, float lambda);
float trades_loss(const Classifier& model, const Tensor& x, const Tensor& x_adv, std::span<const int> labels,
                  float lambda);

struct AdvTrainLog {
    std::vector<float> clean_loss, adv_loss, mixed_loss;  // per-epoch means

    std::string csv() const;
};

/// Each step pairs a clean batch (epoch_order over clean) with an
/// independently drawn adversarial batch of the same size. An empty adv set
/// is allowed only with alpha_mix = 1.
AdvTrainLog adversarial_train(Classifier& model, const Dataset& clean, const Dataset& adv, const AdvTrainConfig& cfg,
                              std::uint64_t seed);

}  // namespace ladder
