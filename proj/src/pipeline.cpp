#include "ladder/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <numeric>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "ladder/adv_train.hpp"
#include "ladder/attacks.hpp"
#include "ladder/checkpoint.hpp"
#include "ladder/csv.hpp"
#include "ladder/eval.hpp"
#include "ladder/ladder_gen.hpp"
#include "ladder/models.hpp"
#include "ladder/rng.hpp"
#include "ladder/svm.hpp"

namespace ladder {

namespace fs = std::filesystem;

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::train: return "train";
        case Stage::fit_svm: return "fit-svm";
        case Stage::gen_adv: return "gen-adv";
        case Stage::attack: return "attack";
        case Stage::adv_train: return "adv-train";
        case Stage::eval: return "eval";
        case Stage::sweep: return "sweep";
        case Stage::report: return "report";
    }
    return "unknown";
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages{Stage::train,     Stage::fit_svm, Stage::gen_adv, Stage::attack,
                                           Stage::adv_train, Stage::eval,    Stage::sweep,   Stage::report};
    return stages;
}

Stage parse_stage(std::string_view text) {
    for (Stage s : all_stages())
        if (to_string(s) == text) return s;
    fail(ErrorKind::usage, "unknown subcommand '" + std::string(text) + "'");
}

Datasets load_data(const ExperimentConfig& cfg) {
    const auto& spec = cfg.data;
    Datasets d{load_idx(spec.train_images, spec.train_labels, Split::train, spec.class_count),
               load_idx(spec.test_images, spec.test_labels, Split::test, spec.class_count)};
    if (spec.downsample) {
        d.train = downsample_to_8x8(d.train);
        d.test = downsample_to_8x8(d.test);
    }
    const Rng root = Rng(cfg.seed_for("data"));
    if (spec.train_per_class > 0) d.train = per_class_subset(d.train, spec.train_per_class, root.split("train").next_u64());
    if (spec.test_per_class > 0) d.test = per_class_subset(d.test, spec.test_per_class, root.split("test").next_u64());
    return d;
}

namespace {

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

fs::path manifest_path(const fs::path& out, Stage stage) { return out / (std::string(to_string(stage)) + ".manifest"); }

void write_manifest(const fs::path& out, Stage stage, const ExperimentConfig& cfg,
                    std::map<std::string, std::string> extra) {
    extra["stage"] = std::string(to_string(stage));
    extra["config_hash"] = hex(cfg.config_hash);
    extra["profile"] = std::string(to_string(cfg.run_profile));
    extra["seed"] = std::to_string(cfg.seed);
    for (const char* s : {"data", "svm", "gen", "train", "attack"})
        extra[std::string("seed.") + s] = std::to_string(cfg.seed_for(s));
    extra["version.ladder"] = std::string(kVersion);
    extra["version.checkpoint"] = std::to_string(kCheckpointVersion);
    write_key_values(manifest_path(out, stage), extra);
}

bool has_stage(const fs::path& out, Stage stage) { return fs::is_regular_file(manifest_path(out, stage)); }

// Artifacts of `stage` must exist and come from the same configuration.
std::map<std::string, std::string> require_stage(const fs::path& out, Stage stage, const ExperimentConfig& cfg) {
    require(has_stage(out, stage), ErrorKind::configuration,
            "missing artifacts of stage '" + std::string(to_string(stage)) + "' in " + out.string() + "; run it first");
    auto m = read_manifest(out, stage);
    require(m["config_hash"] == hex(cfg.config_hash), ErrorKind::consistency,
            "artifacts of stage '" + std::string(to_string(stage)) + "' were produced by config " + m["config_hash"] +
                ", current config is " + hex(cfg.config_hash));
    return m;
}

std::string join(std::span<const std::string> items, char sep = ',') {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? std::string(1, sep) : "") + items[i];
    return out;
}

std::string ladder_name(Variant v) {
    switch (v) {
        case Variant::normal: return "ladder";
        case Variant::cav_random: return "ladder_cavRandom";
        case Variant::random: return "ladder_random";
    }
    return "ladder";
}

std::string base_method(const std::string& method) { return method.substr(0, method.find('+')); }

std::string file_token(std::string method) {
    std::replace(method.begin(), method.end(), '+', '_');
    return method;
}

std::string losses_csv(const EpochLog& log) {
    CsvWriter w({"epoch", "loss"});
    for (std::size_t e = 0; e < log.losses.size(); ++e) w.row({std::to_string(e), format_float(log.losses[e])});
    return w.text();
}

std::string pct(float v) { return format_float(v, 2); }

Classifier fresh_classifier(const ExperimentConfig& cfg, const Dataset& ds) {
    return make_classifier(cfg.model, ds.sample_shape(), ds.class_count(), cfg.seed_for("train"));
}

Classifier load_classifier(const ExperimentConfig& cfg, const Dataset& ds, const fs::path& path) {
    Classifier m = fresh_classifier(cfg, ds);
    m.load_state(load_checkpoint(path));
    return m;
}

Generator load_generator(const ExperimentConfig& cfg, const Classifier& clf, const fs::path& out) {
    Generator g = make_generator(cfg.model, clf, cfg.seed_for("gen"), cfg.norm_p);
    g.load_state(load_checkpoint(out / "generator.ckpt"));
    return g;
}

std::unique_ptr<SvmBank> load_bank(const ExperimentConfig& cfg, const Classifier& clf, const Dataset& train,
                                   const fs::path& out) {
    auto bank = std::make_unique<SvmBank>(clf.latent(train),
                                          std::vector<int>(train.labels().begin(), train.labels().end()),
                                          train.class_count(), cfg.svm, cfg.svm_per_class);
    for (auto& svm : SvmBank::load(out / "svms.ckpt")) bank->insert(std::move(svm));
    return bank;
}

std::vector<std::pair<int, int>> all_pairs(std::size_t classes) {
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = a + 1; b < classes; ++b) pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));
    return pairs;
}

// Trains a defence on clean + adv from the vanilla initialisation (or the
// vanilla weights when fine-tuning).
Classifier train_defence(const ExperimentConfig& cfg, const Dataset& train, const Dataset& adv, bool trades,
                         const fs::path& out, AdvTrainLog* log) {
    Classifier model = cfg.advtrain.fine_tune ? load_classifier(cfg, train, out / "classifier.ckpt")
                                              : fresh_classifier(cfg, train);
    AdvTrainConfig at = cfg.advtrain;
    if (trades) at.regularizer = Regularizer::trades;
    AdvTrainLog l = adversarial_train(model, train, adv, at, cfg.seed_for("train"));
    if (log) *log = std::move(l);
    return model;
}

void stage_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const Datasets d = load_data(cfg);
    log << "[train] " << d.train.size() << " train / " << d.test.size() << " test samples\n";
    Classifier clf = fresh_classifier(cfg, d.train);
    const EpochLog clog = train_classifier(clf, d.train, cfg.classifier, cfg.seed_for("train"));
    Generator gen = make_generator(cfg.model, clf, cfg.seed_for("gen"), cfg.norm_p);
    const EpochLog glog = train_generator(gen, d.train, clf, cfg.generator, cfg.seed_for("gen"));

    const auto before = clf.predict(d.test);
    const auto after = clf.predict(gen.decode(clf.latent(d.test)));
    std::size_t same = 0;
    for (std::size_t i = 0; i < before.size(); ++i) same += before[i] == after[i];

    save_checkpoint(out / "classifier.ckpt", clf.state());
    save_checkpoint(out / "generator.ckpt", gen.state());
    write_text(out / "classifier_log.csv", losses_csv(clog));
    write_text(out / "generator_log.csv", losses_csv(glog));
    CsvWriter m({"metric", "value"});
    const float test_acc = accuracy(clf, d.test);
    m.row({"train_accuracy", pct(accuracy(clf, d.train))});
    m.row({"test_accuracy", pct(test_acc)});
    m.row({"generator_mse_train", format_float(reconstruction_mse(gen, clf, d.train), 6)});
    m.row({"generator_mse_test", format_float(reconstruction_mse(gen, clf, d.test), 6)});
    m.row({"consistency_test", pct(100.0f * static_cast<float>(same) / static_cast<float>(before.size()))});
    m.save(out / "train_metrics.csv");
    log << "[train] vanilla test accuracy " << pct(test_acc) << "%\n";
    write_manifest(out, Stage::train, cfg,
                   {{"artifacts", "classifier.ckpt,generator.ckpt,classifier_log.csv,generator_log.csv,train_metrics.csv"},
                    {"train_size", std::to_string(d.train.size())},
                    {"test_size", std::to_string(d.test.size())}});
}

void stage_fit_svm(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    require_stage(out, Stage::train, cfg);
    const Datasets d = load_data(cfg);
    const Classifier clf = load_classifier(cfg, d.train, out / "classifier.ckpt");
    SvmBank bank(clf.latent(d.train), std::vector<int>(d.train.labels().begin(), d.train.labels().end()),
                 d.train.class_count(), cfg.svm, cfg.svm_per_class);
    const auto pairs = all_pairs(d.train.class_count());
    bank.prepare(pairs);
    bank.save(out / "svms.ckpt");

    CsvWriter m({"negative", "positive", "accuracy"});
    for (const auto& [key, svm] : bank.cache()) {
        std::vector<std::size_t> idx;
        std::vector<float> signs;
        for (std::size_t i = 0; i < d.train.size(); ++i) {
            const int y = d.train.label(i);
            if (!svm.pair().contains(y)) continue;
            idx.push_back(i);
            signs.push_back(y == svm.pair().positive ? 1.0f : -1.0f);
        }
        const float acc = svm_accuracy(svm, clf.latent(d.train.subset(idx)), signs);
        m.row({std::to_string(svm.pair().negative), std::to_string(svm.pair().positive), pct(100.0f * acc)});
    }
    m.save(out / "svm_metrics.csv");
    log << "[fit-svm] trained " << bank.trained_count() << " pairwise SVMs\n";
    write_manifest(out, Stage::fit_svm, cfg,
                   {{"artifacts", "svms.ckpt,svm_metrics.csv"}, {"pairs", std::to_string(bank.trained_count())}});
}

void stage_gen_adv(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    require_stage(out, Stage::train, cfg);
    require_stage(out, Stage::fit_svm, cfg);
    const Datasets d = load_data(cfg);
    const Classifier clf = load_classifier(cfg, d.train, out / "classifier.ckpt");
    const Generator gen = load_generator(cfg, clf, out);
    auto bank = load_bank(cfg, clf, d.train, out);

    std::map<std::string, std::string> extra;
    std::vector<std::string> artifacts, names;
    std::size_t total = 0;
    for (Variant v : cfg.variants) {
        PerturbationSpec spec = cfg.perturbation;
        spec.variant = v;
        const AdvDataset adv = build_adv_dataset(clf, gen, *bank, d.train, cfg.ladder_budget, spec, cfg.policy);
        const std::string name = ladder_name(v);
        save_dataset(out / ("adv_" + name + ".ckpt"), adv.data);
        write_text(out / ("adv_" + name + "_records.csv"), records_csv(adv.records));
        const auto flipped = std::count_if(adv.records.begin(), adv.records.end(),
                                           [](const GeneratedExample& r) { return r.flipped; });
        extra["records." + name] = std::to_string(adv.data.size());
        extra["flipped." + name] = std::to_string(flipped);
        extra["sources." + name] = std::to_string(adv.sources_used);
        artifacts.push_back("adv_" + name + ".ckpt");
        artifacts.push_back("adv_" + name + "_records.csv");
        names.push_back(name);
        total += adv.data.size();
        log << "[gen-adv] " << name << ": " << adv.data.size() << " examples from " << adv.sources_used
            << " sources, " << flipped << " flipped\n";
    }
    extra["records"] = std::to_string(total);
    extra["sets"] = join(names);
    extra["policy"] = std::string(to_string(cfg.policy));
    extra["artifacts"] = join(artifacts);
    write_manifest(out, Stage::gen_adv, cfg, std::move(extra));
}

void stage_attack(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    require_stage(out, Stage::train, cfg);
    const bool wants_ladder = std::find(cfg.attacks.begin(), cfg.attacks.end(), "ladder") != cfg.attacks.end();
    if (wants_ladder) require_stage(out, Stage::fit_svm, cfg);
    const Datasets d = load_data(cfg);
    const Classifier clf = load_classifier(cfg, d.train, out / "classifier.ckpt");
    const Rng root(cfg.seed_for("attack"));

    std::vector<std::size_t> order(d.train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng pick = root.split("attack-sources");
    pick.shuffle(std::span<std::size_t>(order));
    order.resize(std::min(order.size(), cfg.attack_train_budget));
    const Dataset train_sources = d.train.subset(order);

    CsvWriter m({"attack", "vanilla_accuracy"});
    std::vector<std::string> artifacts;
    for (const auto& name : cfg.attacks) {
        Dataset test_adv;
        if (name == "ladder") {
            const Generator gen = load_generator(cfg, clf, out);
            auto bank = load_bank(cfg, clf, d.train, out);
            PerturbationSpec spec = cfg.perturbation;
            spec.variant = Variant::normal;
            spec.seed = root.split("ladder").next_u64();
            test_adv = build_adv_dataset(clf, gen, *bank, d.test, d.test.size(), spec, KeepPolicy::all).data;
        } else {
            AttackConfig ac = cfg.attack;
            ac.kind = parse_attack(name);
            ac.seed = root.split(name).split("test").next_u64();
            test_adv = attack_dataset(clf, d.test, ac);
            ac.seed = root.split(name).split("train").next_u64();
            save_dataset(out / ("attack_" + name + "_train.ckpt"), attack_dataset(clf, train_sources, ac));
            artifacts.push_back("attack_" + name + "_train.ckpt");
        }
        test_adv.set_split(Split::test);
        save_dataset(out / ("attack_" + name + "_test.ckpt"), test_adv);
        artifacts.push_back("attack_" + name + "_test.ckpt");
        const float acc = accuracy(clf, test_adv);
        m.row({name, pct(acc)});
        log << "[attack] " << name << ": vanilla accuracy " << pct(acc) << "% on " << test_adv.size()
            << " examples\n";
    }
    m.save(out / "attack_metrics.csv");
    artifacts.push_back("attack_metrics.csv");
    write_manifest(out, Stage::attack, cfg, {{"attacks", join(cfg.attacks)}, {"artifacts", join(artifacts)}});
}

Dataset method_training_set(const ExperimentConfig& cfg, const fs::path& out, const std::string& method,
                            std::size_t classes) {
    const std::string base = base_method(method);
    if (base.starts_with("ladder")) {
        const auto m = require_stage(out, Stage::gen_adv, cfg);
        const auto sets = split_list(m.count("sets") ? m.at("sets") : "");
        require(std::find(sets.begin(), sets.end(), base) != sets.end(), ErrorKind::configuration,
                "gen-adv did not produce the '" + base + "' set; add its variant to ladder.variants");
        return load_dataset(out / ("adv_" + base + ".ckpt"), classes);
    }
    const auto m = require_stage(out, Stage::attack, cfg);
    const auto attacks = split_list(m.count("attacks") ? m.at("attacks") : "");
    require(std::find(attacks.begin(), attacks.end(), base) != attacks.end(), ErrorKind::configuration,
            "attack stage did not produce '" + base + "'; add it to attack.list");
    return load_dataset(out / ("attack_" + base + "_train.ckpt"), classes);
}

void stage_adv_train(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    require_stage(out, Stage::train, cfg);
    const Datasets d = load_data(cfg);
    std::vector<std::string> artifacts;
    for (const auto& method : cfg.methods) {
        const Dataset adv = method_training_set(cfg, out, method, d.train.class_count());
        AdvTrainLog tlog;
        const bool trades = method.ends_with("+trades");
        const Classifier model = train_defence(cfg, d.train, adv, trades, out, &tlog);
        const std::string tok = file_token(method);
        save_checkpoint(out / ("model_" + tok + ".ckpt"), model.state());
        write_text(out / ("advtrain_" + tok + "_log.csv"), tlog.csv());
        artifacts.push_back("model_" + tok + ".ckpt");
        artifacts.push_back("advtrain_" + tok + "_log.csv");
        log << "[adv-train] " << method << ": clean test accuracy " << pct(accuracy(model, d.test)) << "%\n";
    }
    write_manifest(out, Stage::adv_train, cfg, {{"methods", join(cfg.methods)}, {"artifacts", join(artifacts)}});
}

void stage_eval(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    require_stage(out, Stage::train, cfg);
    const Datasets d = load_data(cfg);
    std::vector<std::string> names{"vanilla"};
    std::vector<Classifier> models{load_classifier(cfg, d.train, out / "classifier.ckpt")};
    if (has_stage(out, Stage::adv_train)) {
        const auto m = require_stage(out, Stage::adv_train, cfg);
        for (const auto& method : split_list(m.at("methods"))) {
            names.push_back(method);
            models.push_back(load_classifier(cfg, d.train, out / ("model_" + file_token(method) + ".ckpt")));
        }
    }
    std::vector<std::string> attacks;
    std::map<std::string, Dataset> adv_sets;
    if (has_stage(out, Stage::attack)) {
        const auto m = require_stage(out, Stage::attack, cfg);
        attacks = split_list(m.at("attacks"));
        for (const auto& a : attacks)
            adv_sets.emplace(a, load_dataset(out / ("attack_" + a + "_test.ckpt"), d.test.class_count(), Split::test));
    }

    std::vector<DefenceModel> defences;
    for (std::size_t i = 0; i < models.size(); ++i)
        defences.push_back({names[i], &models[i], i == 0 ? std::string() : base_method(names[i])});
    const RobustnessTable table = robustness_matrix(defences, attacks, d.test, adv_sets);

    CsvWriter acc({"model", "clean_accuracy"});
    for (std::size_t r = 0; r < table.row_count(); ++r) acc.row({table.rows()[r], pct(*table.at(r, 0))});
    acc.save(out / "accuracy.csv");
    write_text(out / "robustness.csv", table.csv());
    std::vector<std::string> artifacts{"accuracy.csv", "robustness.csv"};

    bool rankable = table.row_count() >= 2;
    for (std::size_t c = 0; c < table.column_count(); ++c) {
        std::size_t valued = 0;
        for (std::size_t r = 0; r < table.row_count(); ++r) valued += !table.masked(r, c);
        rankable = rankable && valued >= 2;
    }
    if (rankable) {
        write_text(out / "ranks.csv", average_rank(table).csv(table));
        artifacts.push_back("ranks.csv");
    }
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        log << "[eval] " << table.rows()[r];
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            const auto v = table.at(r, c);
            log << ' ' << table.columns()[c] << '=' << (v ? pct(*v) : std::string("-"));
        }
        log << '\n';
    }
    write_manifest(out, Stage::eval, cfg, {{"artifacts", join(artifacts)}, {"models", join(names)}});
}

void stage_sweep(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    require_stage(out, Stage::train, cfg);
    require_stage(out, Stage::fit_svm, cfg);
    const auto am = require_stage(out, Stage::attack, cfg);
    const auto attacks = split_list(am.at("attacks"));
    require(std::find(attacks.begin(), attacks.end(), cfg.sweep_reference) != attacks.end(), ErrorKind::configuration,
            "sweep.reference '" + cfg.sweep_reference + "' is not among the generated attacks");
    const Datasets d = load_data(cfg);
    const Classifier clf = load_classifier(cfg, d.train, out / "classifier.ckpt");
    const Generator gen = load_generator(cfg, clf, out);
    auto bank = load_bank(cfg, clf, d.train, out);
    const Dataset reference =
        load_dataset(out / ("attack_" + cfg.sweep_reference + "_test.ckpt"), d.test.class_count(), Split::test);
    const std::size_t budget = cfg.sweep_per_class * d.train.class_count();

    const auto points = epsilon_sweep(cfg.sweep_epsilons, [&](float eps) {
        PerturbationSpec spec = cfg.perturbation;
        spec.variant = Variant::normal;
        spec.epsilons = {eps};
        const AdvDataset adv = build_adv_dataset(clf, gen, *bank, d.train, budget, spec, cfg.policy);
        const Classifier model = train_defence(cfg, d.train, adv.data, false, out, nullptr);
        const std::pair<float, float> r{accuracy(model, d.test), accuracy(model, reference)};
        log << "[sweep] eps=" << format_float(eps) << " clean " << pct(r.first) << "% robust " << pct(r.second)
            << "%\n";
        return r;
    });
    write_text(out / "sweep.csv", sweep_csv(points));
    write_text(out / "sweep.svg", sweep_svg(points, "LADDER epsilon sweep (reference: " + cfg.sweep_reference + ")"));
    write_manifest(out, Stage::sweep, cfg,
                   {{"artifacts", "sweep.csv,sweep.svg"}, {"budget", std::to_string(budget)},
                    {"reference", cfg.sweep_reference}});
}

std::string markdown_table(const std::string& csv_text) {
    const auto rows = parse_csv(csv_text);
    if (rows.empty()) return {};
    std::string md;
    auto line = [&](const std::vector<std::string>& cells) {
        md += "|";
        for (const auto& c : cells) md += " " + c + " |";
        md += "\n";
    };
    line(rows[0]);
    md += "|";
    for (std::size_t i = 0; i < rows[0].size(); ++i) md += " --- |";
    md += "\n";
    for (std::size_t i = 1; i < rows.size(); ++i) line(rows[i]);
    return md;
}

void stage_report(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    std::set<std::string> hashes;
    std::vector<std::string> present;
    for (Stage s : all_stages()) {
        if (s == Stage::report || !has_stage(out, s)) continue;
        hashes.insert(read_manifest(out, s)["config_hash"]);
        present.push_back(std::string(to_string(s)));
    }
    require(!present.empty(), ErrorKind::configuration, "no stage manifests in " + out.string());
    require(hashes.size() == 1, ErrorKind::consistency,
            "artifacts in " + out.string() + " come from " + std::to_string(hashes.size()) + " different configs");
    require(*hashes.begin() == hex(cfg.config_hash), ErrorKind::consistency,
            "artifacts were produced by config " + *hashes.begin() + ", current config is " + hex(cfg.config_hash));

    std::string md = "# LADDER run report\n\n";
    md += "- config hash: `" + hex(cfg.config_hash) + "`\n";
    md += "- profile: " + std::string(to_string(cfg.run_profile)) + "\n";
    md += "- seed: " + std::to_string(cfg.seed) + "\n";
    md += "- stages: " + join(present, ' ') + "\n";
    const std::pair<const char*, const char*> sections[] = {
        {"train_metrics.csv", "Training"},        {"attack_metrics.csv", "Attacks against the vanilla model"},
        {"accuracy.csv", "Standard accuracy (%)"}, {"robustness.csv", "Robustness matrix (%)"},
        {"ranks.csv", "Average rank"},            {"sweep.csv", "Epsilon sweep"}};
    for (const auto& [file, title] : sections) {
        if (!fs::is_regular_file(out / file)) continue;
        md += std::string("\n## ") + title + "\n\n" + markdown_table(read_text(out / file));
    }
    write_text(out / "report.md", md);
    log << "[report] wrote report.md from " << present.size() << " stages\n";
    write_manifest(out, Stage::report, cfg, {{"artifacts", "report.md"}, {"stages", join(present)}});
}

std::string quoted(std::string_view text) {
    std::string out = "\"";
    for (char c : text) {
        if (c == '"' || c == '\\') out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::map<std::string, std::string> read_manifest(const fs::path& out, Stage stage) {
    return read_key_values(manifest_path(out, stage));
}

void run_stage(Stage stage, const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    fs::create_directories(out);
    switch (stage) {
        case Stage::train: return stage_train(cfg, out, log);
        case Stage::fit_svm: return stage_fit_svm(cfg, out, log);
        case Stage::gen_adv: return stage_gen_adv(cfg, out, log);
        case Stage::attack: return stage_attack(cfg, out, log);
        case Stage::adv_train: return stage_adv_train(cfg, out, log);
        case Stage::eval: return stage_eval(cfg, out, log);
        case Stage::sweep: return stage_sweep(cfg, out, log);
        case Stage::report: return stage_report(cfg, out, log);
    }
}

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LADDER: latent boundary-guided adversarial training", "ladder"};
    app.require_subcommand(1, 1);
    std::string config, out_dir, profile, seed;
    for (Stage s : all_stages()) {
        auto* sub = app.add_subcommand(std::string(to_string(s)));
        sub->add_option("--config", config, "key=value configuration file");
        sub->add_option("--out", out_dir, "artifact directory")->required();
        sub->add_option("--profile", profile, "desk or full")->check(CLI::IsMember({"desk", "full"}));
        sub->add_option("--seed", seed, "seed override");
    }
    std::string stage_name = "cli";
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        const Stage stage = parse_stage(app.get_subcommands().front()->get_name());
        stage_name = std::string(to_string(stage));
        if (!seed.empty())
            require(seed.find_first_not_of("0123456789") == std::string::npos, ErrorKind::usage,
                    "--seed expects a non-negative integer");
        std::optional<RunProfile> p;
        if (!profile.empty()) p = parse_run_profile(profile);
        const ExperimentConfig cfg = load_experiment(config, p, seed);
        run_stage(stage, cfg, out_dir, out);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error stage=" << stage_name << " kind=usage message=" << quoted(e.what()) << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error stage=" << stage_name << " kind=" << to_string(e.kind()) << " message=" << quoted(e.what())
            << '\n';
        return e.kind() == ErrorKind::usage ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error stage=" << stage_name << " kind=internal message=" << quoted(e.what()) << '\n';
        return 1;
    }
}

}  // namespace ladder
