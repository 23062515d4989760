#include "ladder/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "ladder/csv.hpp"
#include "ladder/data.hpp"
#include "ladder/rng.hpp"

namespace ladder {

namespace {

const char* const kPathKeys[] = {"data.train_images", "data.train_labels", "data.test_images", "data.test_labels"};

std::string join_floats(std::span<const float> values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_float(values[i]);
    return out;
}

// Typed readers over a Config; every failure names the key.
struct Reader {
    const Config& cfg;

    const std::string& str(const std::string& key) const { return cfg.get(key); }

    std::uint64_t u64(const std::string& key) const {
        const std::string& s = str(key);
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc() && ptr == s.data() + s.size(), ErrorKind::configuration,
                key + ": expected a non-negative integer, got '" + s + "'");
        return v;
    }

    std::size_t size(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

    float real(const std::string& key) const {
        const std::string& s = str(key);
        float v = 0.0f;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        require(ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v), ErrorKind::configuration,
                key + ": expected a number, got '" + s + "'");
        return v;
    }

    bool flag(const std::string& key) const {
        const std::string& s = str(key);
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        fail(ErrorKind::configuration, key + ": expected true or false, got '" + s + "'");
    }

    std::vector<float> reals(const std::string& key) const {
        std::vector<float> out;
        for (const auto& item : split_list(str(key))) {
            float v = 0.0f;
            auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
            require(ec == std::errc() && ptr == item.data() + item.size() && std::isfinite(v),
                    ErrorKind::configuration, key + ": bad number '" + item + "'");
            out.push_back(v);
        }
        return out;
    }

    SgdConfig sgd(const std::string& section) const {
        SgdConfig s;
        s.learning_rate = real(section + ".lr");
        s.momentum = real(section + ".momentum");
        s.weight_decay = real(section + ".weight_decay");
        s.batch_size = size(section + ".batch_size");
        s.epochs = size(section + ".epochs");
        try {
            s.validate();
        } catch (const Error& e) {
            fail(ErrorKind::configuration, section + ": " + e.what());
        }
        return s;
    }
};

void put_sgd(Config& c, const std::string& section, const SgdConfig& s) {
    c.set(section + ".lr", format_float(s.learning_rate));
    c.set(section + ".momentum", format_float(s.momentum));
    c.set(section + ".weight_decay", format_float(s.weight_decay));
    c.set(section + ".batch_size", std::to_string(s.batch_size));
    c.set(section + ".epochs", std::to_string(s.epochs));
}

}  // namespace

std::vector<std::string> split_list(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(sep, start), text.size());
        std::string item(text.substr(start, end - start));
        const auto first = item.find_first_not_of(" \t");
        if (first != std::string::npos) out.push_back(item.substr(first, item.find_last_not_of(" \t") - first + 1));
        start = end + 1;
    }
    return out;
}

Config Config::parse(std::string_view text, std::filesystem::path base_dir) {
    Config c;
    c.values_ = parse_key_values(text);
    c.base_dir_ = std::move(base_dir);
    return c;
}

Config Config::from_file(const std::filesystem::path& path) {
    require(std::filesystem::is_regular_file(path), ErrorKind::configuration,
            "config file not found: " + path.string());
    return parse(read_text(path), path.parent_path());
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), ErrorKind::configuration, "missing config key '" + key + "'");
    return it->second;
}

std::string Config::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::string_view to_string(RunProfile profile) { return profile == RunProfile::desk ? "desk" : "full"; }

RunProfile parse_run_profile(std::string_view text) {
    if (text == "desk") return RunProfile::desk;
    if (text == "full") return RunProfile::full;
    fail(ErrorKind::usage, "unknown profile '" + std::string(text) + "' (expected desk or full)");
}

Config default_config(RunProfile profile) {
    const bool desk = profile == RunProfile::desk;
    Config c;
    c.set("profile", std::string(to_string(profile)));
    c.set("data.train_images", "data/mnist-mini/train-images-idx3-ubyte");
    c.set("data.train_labels", "data/mnist-mini/train-labels-idx1-ubyte");
    c.set("data.test_images", "data/mnist-mini/t10k-images-idx3-ubyte");
    c.set("data.test_labels", "data/mnist-mini/t10k-labels-idx1-ubyte");
    c.set("data.downsample", desk ? "true" : "false");
    c.set("data.train_per_class", "0");
    c.set("data.test_per_class", "0");
    c.set("data.class_count", "10");
    c.set("model.profile", desk ? "desk_cnn" : "lenet");

    const SgdConfig clf = desk ? SgdConfig{0.01f, 0.9f, 0.0f, 32, 60} : SgdConfig::mnist();
    put_sgd(c, "classifier", clf);
    put_sgd(c, "generator", desk ? SgdConfig{0.1f, 0.9f, 0.0f, 32, 100} : SgdConfig{0.1f, 0.9f, 0.0f, 64, 100});
    c.set("generator.norm_p", "2");

    const SvmConfig svm;
    c.set("svm.lr", format_float(svm.learning_rate));
    c.set("svm.epochs", std::to_string(svm.epochs));
    c.set("svm.batch_size", std::to_string(svm.batch_size));
    c.set("svm.lambda", format_float(svm.lambda));
    c.set("svm.kernel", std::to_string(svm.kernel));
    c.set("svm.per_class", "200");

    c.set("ladder.variants", "normal");
    c.set("ladder.epsilons", join_floats(sweep_epsilons()));
    c.set("ladder.noise_scale", "1");
    c.set("ladder.budget", desk ? "700" : "4500");
    c.set("ladder.policy", "all");

    const AttackConfig atk;
    c.set("attack.list", "fgsm,pgd,jsma,ladder");
    c.set("attack.epsilon", format_float(atk.epsilon));
    c.set("attack.pgd_step", format_float(atk.step));
    c.set("attack.pgd_iters", std::to_string(atk.iters));
    c.set("attack.pgd_random_start", "false");
    c.set("attack.jsma_theta", format_float(atk.theta));
    c.set("attack.jsma_max_fraction", format_float(atk.max_fraction));
    c.set("attack.train_budget", desk ? "700" : "4500");

    c.set("advtrain.methods", "ladder,fgsm,pgd,jsma");
    c.set("advtrain.alpha_mix", "0.5");
    put_sgd(c, "advtrain", clf);
    c.set("advtrain.regularizer", "none");
    c.set("advtrain.trades_lambda", "1");
    c.set("advtrain.trades_epsilon", "0.3");
    c.set("advtrain.fine_tune", "false");

    c.set("sweep.epsilons", join_floats(sweep_epsilons()));
    c.set("sweep.per_class", desk ? "10" : "450");
    c.set("sweep.reference", "fgsm");
    return c;
}

ExperimentConfig ExperimentConfig::from(const Config& cfg) {
    for (const auto& [key, value] : cfg.values())
        require(default_config(RunProfile::desk).has(key) || key == "seed", ErrorKind::configuration,
                "unknown config key '" + key + "'");
    require(cfg.has("seed"), ErrorKind::configuration, "no seed given (set seed=N or pass --seed)");

    const Reader r{cfg};
    ExperimentConfig e;
    e.source = cfg;
    e.config_hash = fnv1a64(cfg.canonical());
    e.run_profile = parse_run_profile(r.str("profile"));
    e.seed = r.u64("seed");

    auto path_of = [&](const std::string& key) {
        std::filesystem::path p = r.str(key);
        require(std::filesystem::is_regular_file(p), ErrorKind::configuration,
                key + ": file not found: " + p.string());
        return p;
    };
    e.data.train_images = path_of("data.train_images");
    e.data.train_labels = path_of("data.train_labels");
    e.data.test_images = path_of("data.test_images");
    e.data.test_labels = path_of("data.test_labels");
    e.data.downsample = r.flag("data.downsample");
    e.data.train_per_class = r.size("data.train_per_class");
    e.data.test_per_class = r.size("data.test_per_class");
    e.data.class_count = r.size("data.class_count");
    require(e.data.class_count >= 2, ErrorKind::configuration, "data.class_count must be at least 2");

    e.model = parse_profile(r.str("model.profile"));
    e.classifier = r.sgd("classifier");
    e.generator = r.sgd("generator");
    e.norm_p = static_cast<int>(r.u64("generator.norm_p"));
    require(e.norm_p == 1 || e.norm_p == 2, ErrorKind::configuration, "generator.norm_p must be 1 or 2");

    e.svm.learning_rate = r.real("svm.lr");
    e.svm.epochs = r.size("svm.epochs");
    e.svm.batch_size = r.size("svm.batch_size");
    e.svm.lambda = r.real("svm.lambda");
    e.svm.kernel = r.size("svm.kernel");
    e.svm.seed = e.seed_for("svm");
    e.svm.validate();
    e.svm_per_class = r.size("svm.per_class");
    require(e.svm_per_class > 0, ErrorKind::configuration, "svm.per_class must be positive");

    e.variants.clear();
    for (const auto& v : split_list(r.str("ladder.variants"))) e.variants.push_back(parse_variant(v));
    require(!e.variants.empty(), ErrorKind::configuration, "ladder.variants is empty");
    e.perturbation.epsilons = r.reals("ladder.epsilons");
    e.perturbation.noise_scale = r.real("ladder.noise_scale");
    e.perturbation.seed = e.seed_for("gen");
    e.perturbation.validate();
    e.ladder_budget = r.size("ladder.budget");
    require(e.ladder_budget > 0, ErrorKind::configuration, "ladder.budget must be positive");
    e.policy = parse_policy(r.str("ladder.policy"));

    e.attacks = split_list(r.str("attack.list"));
    for (const auto& a : e.attacks)
        require(a == "fgsm" || a == "pgd" || a == "jsma" || a == "ladder", ErrorKind::configuration,
                "attack.list: unknown attack '" + a + "'");
    e.attack.epsilon = r.real("attack.epsilon");
    e.attack.step = r.real("attack.pgd_step");
    e.attack.iters = r.size("attack.pgd_iters");
    e.attack.random_start = r.flag("attack.pgd_random_start");
    e.attack.theta = r.real("attack.jsma_theta");
    e.attack.max_fraction = r.real("attack.jsma_max_fraction");
    e.attack.seed = e.seed_for("attack");
    for (AttackKind k : {AttackKind::fgsm, AttackKind::pgd, AttackKind::jsma}) {
        AttackConfig a = e.attack;
        a.kind = k;
        a.validate();
    }
    e.attack_train_budget = r.size("attack.train_budget");

    e.methods = split_list(r.str("advtrain.methods"));
    for (const auto& m : e.methods) {
        const std::string base = m.substr(0, m.find('+'));
        const bool known = base == "fgsm" || base == "pgd" || base == "jsma" || base == "ladder" ||
                           base == "ladder_cavRandom" || base == "ladder_random";
        require(known, ErrorKind::configuration, "advtrain.methods: unknown method '" + m + "'");
        require(m.size() == base.size() || m.substr(base.size()) == "+trades", ErrorKind::configuration,
                "advtrain.methods: only '+trades' may follow a method name");
    }
    std::vector<std::string> sorted = e.methods;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), ErrorKind::configuration,
            "advtrain.methods lists a method twice");
    e.advtrain.alpha_mix = r.real("advtrain.alpha_mix");
    e.advtrain.sgd = r.sgd("advtrain");
    const std::string& reg = r.str("advtrain.regularizer");
    require(reg == "none" || reg == "trades", ErrorKind::configuration,
            "advtrain.regularizer must be none or trades");
    e.advtrain.regularizer = reg == "trades" ? Regularizer::trades : Regularizer::none;
    e.advtrain.trades_lambda = r.real("advtrain.trades_lambda");
    e.advtrain.trades_epsilon = r.real("advtrain.trades_epsilon");
    e.advtrain.fine_tune = r.flag("advtrain.fine_tune");
    e.advtrain.validate();

    e.sweep_epsilons = r.reals("sweep.epsilons");
    require(!e.sweep_epsilons.empty(), ErrorKind::configuration, "sweep.epsilons is empty");
    require(std::is_sorted(e.sweep_epsilons.begin(), e.sweep_epsilons.end()), ErrorKind::configuration,
            "sweep.epsilons must be ascending");
    e.sweep_per_class = r.size("sweep.per_class");
    require(e.sweep_per_class > 0, ErrorKind::configuration, "sweep.per_class must be positive");
    e.sweep_reference = r.str("sweep.reference");
    return e;
}

std::uint64_t ExperimentConfig::seed_for(std::string_view stream) const { return Rng(seed).split(stream).next_u64(); }

ExperimentConfig load_experiment(const std::filesystem::path& config_path, std::optional<RunProfile> profile,
                                 const std::string& seed_override) {
    Config file;
    if (!config_path.empty()) file = Config::from_file(config_path);
    if (!profile) profile = file.has("profile") ? parse_run_profile(file.get("profile")) : RunProfile::desk;
    Config merged = default_config(*profile);
    for (const auto& [key, value] : file.values()) {
        std::string v = value;
        // Relative data paths in a file are relative to that file.
        if (std::find(std::begin(kPathKeys), std::end(kPathKeys), key) != std::end(kPathKeys) &&
            std::filesystem::path(v).is_relative())
            v = (file.base_dir() / v).string();
        merged.set(key, v);
    }
    // absolute paths keep the config hash independent of the working directory
    for (const char* key : kPathKeys)
        merged.set(key, std::filesystem::weakly_canonical(std::filesystem::absolute(merged.get(key))).string());
    merged.set("profile", std::string(to_string(*profile)));
    if (!seed_override.empty()) merged.set("seed", seed_override);
    return ExperimentConfig::from(merged);
}

}  // namespace ladder
