#include "ladder/ladder_gen.hpp"

#include <algorithm>
#include <cmath>

#include "ladder/checkpoint.hpp"
#include "ladder/csv.hpp"
#include "ladder/parallel.hpp"
#include "ladder/rng.hpp"

namespace ladder {

std::string_view to_string(Variant variant) {
    switch (variant) {
        case Variant::normal: return "normal";
        case Variant::cav_random: return "cavRandom";
        case Variant::random: return "random";
    }
    return "unknown";
}

Variant parse_variant(std::string_view text) {
    if (text == "normal") return Variant::normal;
    if (text == "cavRandom") return Variant::cav_random;
    if (text == "random") return Variant::random;
    fail(ErrorKind::configuration, "unknown variant '" + std::string(text) + "'");
}

std::string_view to_string(KeepPolicy policy) { return policy == KeepPolicy::all ? "all" : "flipped_only"; }

KeepPolicy parse_policy(std::string_view text) {
    if (text == "all") return KeepPolicy::all;
    if (text == "flipped_only") return KeepPolicy::flipped_only;
    fail(ErrorKind::configuration, "unknown policy '" + std::string(text) + "'");
}

std::vector<float> sweep_epsilons() { return {0.1f, 2.0f, 5.0f, 7.0f, 10.0f, 15.0f, 20.0f}; }

void PerturbationSpec::validate() const {
    require(!epsilons.empty(), ErrorKind::configuration, "perturbation needs at least one epsilon");
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        require(std::isfinite(epsilons[i]) && epsilons[i] >= 0.0f, ErrorKind::configuration,
                "epsilons must be finite and non-negative");
        require(i == 0 || epsilons[i - 1] <= epsilons[i], ErrorKind::configuration, "epsilons must be ascending");
    }
    require(std::isfinite(noise_scale) && noise_scale >= 0.0f, ErrorKind::configuration,
            "noise_scale must be non-negative");
}

std::vector<float> perturb_along(std::span<const float> z, std::span<const float> beta,
                                 std::span<const float> direction, float eps) {
    require(beta.size() == z.size() && direction.size() == z.size(), ErrorKind::dimension,
            "z, beta and direction must have equal length");
    require(eps >= 0.0f, ErrorKind::contract, "epsilon must be non-negative");
    std::vector<float> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + eps * (beta[i] * direction[i]);
    return out;
}

std::vector<float> variant_direction(std::span<const float> d, Variant variant, float noise_scale,
                                     std::uint64_t seed) {
    std::vector<float> dir(d.begin(), d.end());
    if (variant == Variant::normal) return dir;
    Rng rng = Rng(seed).split("latent-noise");
    for (float& v : dir) {
        const float noise = noise_scale * static_cast<float>(rng.normal());
        v = variant == Variant::cav_random ? v + noise : noise;
    }
    return dir;
}

std::vector<float> perturb_latent(std::span<const float> z, std::span<const float> beta, std::span<const float> d,
                                  float eps, Variant variant, float noise_scale, std::uint64_t seed) {
    require(d.size() == z.size(), ErrorKind::dimension, "z and d must have equal length");
    return perturb_along(z, beta, variant_direction(d, variant, noise_scale, seed), eps);
}

std::optional<float> crossing_epsilon(const AttentionSvm& svm, std::span<const float> z) {
    const auto beta = svm.attention(z);
    const double g = svm.margin_with(z, beta);
    double slope = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        slope += static_cast<double>(svm.w()[i]) * beta[i] * beta[i] * svm.d()[i];
    require(slope > 1e-12, ErrorKind::degeneracy, "margin does not increase along the normal (slope <= 1e-12)");
    if (g > 0.0) return std::nullopt;
    if (g == 0.0) return 0.0f;
    return static_cast<float>(-g / slope);
}

std::vector<GeneratedExample> generate_adversarial(const Classifier& classifier, const Generator& gen,
                                                   const AttentionSvm& svm, std::span<const float> x, int y_true,
                                                   const PerturbationSpec& spec, std::size_t source_index) {
    spec.validate();
    const ClassPair pair = svm.pair();
    require(pair.contains(y_true), ErrorKind::contract,
            "source label " + std::to_string(y_true) + " is not in the svm pair");
    require(gen.latent_dim() == classifier.latent_dim() && svm.latent_dim() == classifier.latent_dim(),
            ErrorKind::dimension, "classifier, generator and svm latent sizes differ");
    const int target = y_true == pair.positive ? pair.negative : pair.positive;
    const AttentionSvm oriented = svm.toward(target);

    Shape in_shape{1};
    in_shape.insert(in_shape.end(), classifier.input_shape().begin(), classifier.input_shape().end());
    const Tensor z = classifier.latent(Tensor(in_shape, {x.begin(), x.end()}));
    const auto beta = oriented.attention(z.data());
    const auto dir = variant_direction(oriented.d().data(), spec.variant, spec.noise_scale,
                                       Rng(spec.seed).split("variant").split(source_index).next_u64());

    const std::size_t f = classifier.latent_dim(), e = spec.epsilons.size();
    Tensor latents({e, f});
    for (std::size_t k = 0; k < e; ++k) {
        const auto zp = perturb_along(z.data(), beta, dir, spec.epsilons[k]);
        std::copy(zp.begin(), zp.end(), latents.ptr() + k * f);
    }
    const Tensor images = gen.decode(latents);
    const auto preds = classifier.predict(images);
    const std::size_t d = element_count(gen.output_shape());
    std::vector<GeneratedExample> out(e);
    for (std::size_t k = 0; k < e; ++k) {
        auto& r = out[k];
        r.x_hat = Tensor(gen.output_shape(),
                         std::vector<float>(images.ptr() + k * d, images.ptr() + (k + 1) * d));
        r.source_index = source_index;
        r.epsilon = spec.epsilons[k];
        r.variant = spec.variant;
        r.y_true = y_true;
        r.y_pred = preds[k];
        r.flipped = r.y_pred != r.y_true;
        r.class_pair = pair;
    }
    return out;
}

AdvDataset build_adv_dataset(const Classifier& classifier, const Generator& gen, SvmBank& bank, const Dataset& ds,
                             std::size_t budget, const PerturbationSpec& spec, KeepPolicy policy) {
    spec.validate();
    require(budget > 0, ErrorKind::budget, "adversarial budget must be positive");
    require(!ds.empty(), ErrorKind::contract, "no source samples");
    require(ds.class_count() >= 2, ErrorKind::contract, "need at least two classes to pick targets");
    const std::size_t per_source = spec.epsilons.size();
    require(policy == KeepPolicy::flipped_only || budget <= ds.size() * per_source, ErrorKind::budget,
            "budget " + std::to_string(budget) + " exceeds the " + std::to_string(ds.size() * per_source) +
                " attainable records");

    // Round-robin source order over classes.
    const Rng root(spec.seed);
    std::vector<std::vector<std::size_t>> members(ds.class_count());
    for (std::size_t c = 0; c < ds.class_count(); ++c) {
        members[c] = ds.indices_of_class(static_cast<int>(c));
        Rng rng = root.split("sources").split(c);
        rng.shuffle(std::span<std::size_t>(members[c]));
    }
    std::vector<std::size_t> order;
    order.reserve(ds.size());
    for (std::size_t r = 0; order.size() < ds.size(); ++r)
        for (const auto& m : members)
            if (r < m.size()) order.push_back(m[r]);

    std::vector<int> targets(ds.size());
    for (std::size_t i : order) {
        Rng rng = root.split("targets").split(i);
        const int y = ds.label(i);
        int t = static_cast<int>(rng.below(ds.class_count() - 1));
        targets[i] = t >= y ? t + 1 : t;
    }

    AdvDataset out{Dataset(ds.sample_shape(), ds.class_count(), Split::train), {}, 0};
    const std::size_t chunk = (budget + per_source - 1) / per_source;
    for (std::size_t begin = 0; begin < order.size() && out.data.size() < budget; begin += chunk) {
        const std::size_t end = std::min(order.size(), begin + chunk);
        std::vector<std::pair<int, int>> pairs;
        for (std::size_t k = begin; k < end; ++k) pairs.emplace_back(ds.label(order[k]), targets[order[k]]);
        bank.prepare(pairs);

        std::vector<std::vector<GeneratedExample>> results(end - begin);
        parallel_for(end - begin, [&](std::size_t k) {
            const std::size_t src = order[begin + k];
            const AttentionSvm& svm = bank.get(ds.label(src), targets[src]);
            results[k] = generate_adversarial(classifier, gen, svm, ds.features(src), ds.label(src), spec, src);
        });
        for (auto& batch : results) {
            if (out.data.size() >= budget) break;
            ++out.sources_used;
            for (auto& r : batch) {
                if (out.data.size() >= budget) break;
                if (policy == KeepPolicy::flipped_only && !r.flipped) continue;
                out.data.add(r.x_hat.data(), r.y_true);
                r.x_hat = Tensor();
                out.records.push_back(std::move(r));
            }
        }
    }
    if (out.data.size() < budget) throw YieldShortfallError(out.data.size(), budget);
    return out;
}

std::string records_csv(std::span<const GeneratedExample> records) {
    CsvWriter csv({"source_index", "epsilon", "variant", "y_true", "y_pred", "flipped"});
    for (const auto& r : records)
        csv.row({std::to_string(r.source_index), format_float(r.epsilon), std::string(to_string(r.variant)),
                 std::to_string(r.y_true), std::to_string(r.y_pred), r.flipped ? "1" : "0"});
    return csv.text();
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    require(!ds.empty(), ErrorKind::contract, "refusing to save an empty dataset");
    Tensor labels({ds.size()});
    for (std::size_t i = 0; i < ds.size(); ++i) labels[i] = static_cast<float>(ds.label(i));
    const std::vector<NamedTensor> entries{{"images", ds.all()}, {"labels", std::move(labels)}};
    save_checkpoint(path, entries);
}

Dataset load_dataset(const std::filesystem::path& path, std::size_t class_count, Split split) {
    const auto entries = load_checkpoint(path);
    const Tensor& images = find_entry(entries, "images");
    const Tensor& labels = find_entry(entries, "labels");
    require(images.rank() >= 2 && labels.rank() == 1 && images.dim(0) == labels.size(), ErrorKind::consistency,
            "image and label counts differ in " + path.string());
    Shape sample(images.shape().begin() + 1, images.shape().end());
    Dataset ds(sample, class_count, split);
    const std::size_t d = element_count(sample);
    for (std::size_t i = 0; i < labels.size(); ++i)
        ds.add(images.data().subspan(i * d, d), static_cast<int>(labels[i]));
    return ds;
}

}  // namespace ladder
