#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ladder/data.hpp"
#include "ladder/models.hpp"
#include "ladder/svm.hpp"

namespace ladder {

enum class Variant { normal, cav_random, random };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view text);

/// 0.1, 2, 5, 7, 10, 15, 20
std::vector<float> sweep_epsilons();

struct PerturbationSpec {
    Variant variant = Variant::normal;
    std::vector<float> epsilons = sweep_epsilons();
    float noise_scale = 1.0f;
    std::uint64_t seed = 0;

    void validate() const;
};

/// z' = z + eps * (beta * direction), elementwise.
std::vector<float> perturb_along(std::span<const float> z, std::span<const float> beta,
                                 std::span<const float> direction, float eps);

/// Direction actually used by a variant: d, d + delta, or gamma; the noise
/// draws come from `seed` alone.
std::vector<float> variant_direction(std::span<const float> d, Variant variant, float noise_scale, std::uint64_t seed);

std::vector<float> perturb_latent(std::span<const float> z, std::span<const float> beta, std::span<const float> d,
                                  float eps, Variant variant, float noise_scale, std::uint64_t seed);

/// Smallest eps at which the frozen-beta margin of `svm` reaches zero, moving
/// along d; none when z already scores strictly positive.
std::optional<float> crossing_epsilon(const AttentionSvm& svm, std::span<const float> z);

struct GeneratedExample {
    Tensor x_hat;  // sample shape
    std::size_t source_index = 0;
    float epsilon = 0.0f;
    Variant variant = Variant::normal;
    int y_true = 0;
    int y_pred = 0;
    bool flipped = false;
    ClassPair class_pair;
};

/// One record per epsilon in spec.epsilons. The svm is oriented toward the
/// pair member that differs from y_true.
std::vector<GeneratedExample> generate_adversarial(const Classifier& classifier, const Generator& gen,
                                                   const AttentionSvm& svm, std::span<const float> x, int y_true,
                                                   const PerturbationSpec& spec, std::size_t source_index = 0);

enum class KeepPolicy { all, flipped_only };

std::string_view to_string(KeepPolicy policy);
KeepPolicy parse_policy(std::string_view text);

struct AdvDataset {
    Dataset data;                           // (x_hat, y_true)
    std::vector<GeneratedExample> records;  // kept records, same order as data (x_hat cleared)
    std::size_t sources_used = 0;
};

/// Sources are visited round-robin over classes (shuffled within each class),
/// each paired with a uniformly drawn other class as target.
AdvDataset build_adv_dataset(const Classifier& classifier, const Generator& gen, SvmBank& bank, const Dataset& ds,
                             std::size_t budget, const PerturbationSpec& spec, KeepPolicy policy);

/// CSV columns: source_index, epsilon, variant, y_true, y_pred, flipped.
std::string records_csv(std::span<const GeneratedExample> records);

/// Images and labels in the checkpoint container ("images", "labels").
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path, std::size_t class_count, Split split = Split::train);

}  // namespace ladder
