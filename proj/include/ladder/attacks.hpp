#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ladder/data.hpp"
#include "ladder/models.hpp"

namespace ladder {

enum class AttackKind { fgsm, pgd, jsma };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack(std::string_view text);

struct AttackConfig {
    AttackKind kind = AttackKind::fgsm;
    float epsilon = 0.3f;  // L-inf budget (fgsm, pgd)
    float step = 0.03f;    // pgd
    std::size_t iters = 10;
    bool random_start = false;
    float theta = 1.0f;  // jsma per-feature change
    float max_fraction = 0.14f;
    std::uint64_t seed = 0;  // pgd random start, jsma target draws

    void validate() const;
};

/// Per-feature box [max(0, x0 - eps), min(1, x0 + eps)], nudged inward so
/// that |x - x0| <= eps also holds when evaluated in f32.
struct LinfBox {
    std::vector<float> lo, hi;
};
LinfBox linf_box(std::span<const float> x0, float eps);
float clamp_to_box(float v, const LinfBox& box, std::size_t i);

/// Gradient of mean cross-entropy with respect to the input batch.
Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const int> labels);

struct AttackResult {
    Tensor x_adv;
    bool zero_gradient = false;  // the gradient vanished everywhere; x returned unchanged
};

AttackResult fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels, float epsilon);
AttackResult pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg);

struct JsmaResult {
    Tensor x_adv;  // sample shape
    bool success = false;
    std::size_t modified = 0;
};

/// Single-feature greedy JSMA toward `target`; x is one sample.
JsmaResult jsma(const Classifier& model, std::span<const float> x, int target, const AttackConfig& cfg);

/// Attacks every sample of ds and keeps the ground-truth labels. JSMA targets
/// are drawn uniformly from the other classes.
Dataset attack_dataset(const Classifier& model, const Dataset& ds, const AttackConfig& cfg);

}  // namespace ladder
