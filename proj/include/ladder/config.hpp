#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ladder/adv_train.hpp"
#include "ladder/attacks.hpp"
#include "ladder/ladder_gen.hpp"
#include "ladder/models.hpp"
#include "ladder/optim.hpp"
#include "ladder/svm.hpp"

namespace ladder {

/// Flat key=value settings with dotted section prefixes ("advtrain.alpha_mix").
/// Lines starting with '#' are comments.
class Config {
   public:
    Config() = default;
    static Config parse(std::string_view text, std::filesystem::path base_dir = {});
    static Config from_file(const std::filesystem::path& path);

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    const std::filesystem::path& base_dir() const noexcept { return base_dir_; }

    /// Sorted "key=value" lines; the config hash is taken over this text.
    std::string canonical() const;

   private:
    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

enum class RunProfile { desk, full };

std::string_view to_string(RunProfile profile);
RunProfile parse_run_profile(std::string_view text);

/// Profile defaults, which any key in `overrides` replaces.
Config default_config(RunProfile profile);

struct DataSpec {
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    bool downsample = false;
    std::size_t train_per_class = 0;  // 0 keeps everything
    std::size_t test_per_class = 0;
    std::size_t class_count = 10;
};

struct ExperimentConfig {
    RunProfile run_profile = RunProfile::desk;
    std::uint64_t seed = 0;
    DataSpec data;
    Profile model = Profile::desk_cnn;
    SgdConfig classifier;
    SgdConfig generator;
    int norm_p = 2;
    SvmConfig svm;
    std::size_t svm_per_class = 200;
    std::vector<Variant> variants{Variant::normal};
    PerturbationSpec perturbation;
    std::size_t ladder_budget = 700;
    KeepPolicy policy = KeepPolicy::all;
    std::vector<std::string> attacks;  // fgsm, pgd, jsma, ladder
    AttackConfig attack;
    std::size_t attack_train_budget = 700;
    std::vector<std::string> methods;  // defences to adversarially train
    AdvTrainConfig advtrain;
    std::vector<float> sweep_epsilons;
    std::size_t sweep_per_class = 10;
    std::string sweep_reference = "fgsm";

    Config source;  // effective key=value settings
    std::uint64_t config_hash = 0;

    /// Validates every field and resolves data paths against the config's
    /// directory; unresolvable paths are configuration errors.
    static ExperimentConfig from(const Config& cfg);

    /// Seed of a named sub-stream: data, svm, gen, train, attack.
    std::uint64_t seed_for(std::string_view stream) const;
};

/// Profile defaults, then the file (if any), then the overrides. An explicit
/// profile wins over the file's "profile" key.
ExperimentConfig load_experiment(const std::filesystem::path& config_path, std::optional<RunProfile> profile,
                                 const std::string& seed_override);

std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace ladder
