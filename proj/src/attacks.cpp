#include "ladder/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ladder/parallel.hpp"
#include "ladder/rng.hpp"

namespace ladder {

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::pgd: return "pgd";
        case AttackKind::jsma: return "jsma";
    }
    return "unknown";
}

AttackKind parse_attack(std::string_view text) {
    if (text == "fgsm") return AttackKind::fgsm;
    if (text == "pgd") return AttackKind::pgd;
    if (text == "jsma") return AttackKind::jsma;
    fail(ErrorKind::configuration, "unknown attack '" + std::string(text) + "'");
}

void AttackConfig::validate() const {
    if (kind == AttackKind::jsma) {
        require(theta > 0.0f && theta <= 1.0f, ErrorKind::configuration, "jsma theta must be in (0, 1]");
        require(max_fraction > 0.0f && max_fraction <= 1.0f, ErrorKind::configuration,
                "jsma max_fraction must be in (0, 1]");
        return;
    }
    require(std::isfinite(epsilon) && epsilon >= 0.0f, ErrorKind::configuration, "attack epsilon must be >= 0");
    if (kind == AttackKind::pgd) {
        require(step > 0.0f && step <= epsilon, ErrorKind::configuration, "pgd step must be in (0, epsilon]");
        require(iters > 0, ErrorKind::configuration, "pgd iters must be positive");
    }
}

LinfBox linf_box(std::span<const float> x0, float eps) {
    LinfBox box{std::vector<float>(x0.size()), std::vector<float>(x0.size())};
    constexpr float inf = std::numeric_limits<float>::infinity();
    for (std::size_t i = 0; i < x0.size(); ++i) {
        float lo = std::max(0.0f, x0[i] - eps);
        while (x0[i] - lo > eps) lo = std::nextafter(lo, inf);
        float hi = std::min(1.0f, x0[i] + eps);
        while (hi - x0[i] > eps) hi = std::nextafter(hi, -inf);
        box.lo[i] = lo;
        box.hi[i] = hi;
    }
    return box;
}

float clamp_to_box(float v, const LinfBox& box, std::size_t i) { return std::clamp(v, box.lo[i], box.hi[i]); }

Tensor input_gradient(const Classifier& model, const Tensor& x, std::span<const int> labels) {
    model.check_input(x.shape());
    require(labels.size() == x.dim(0), ErrorKind::dimension, "one label per input required");
    Tape tape;
    auto params = model.bind(tape, false);
    Var xv = tape.leaf(x, true);
    Var loss = ops::cross_entropy(model.forward(xv, params).logits, labels);
    return tape.backward(loss)[xv];
}

namespace {

float sign_of(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

bool all_zero(const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](float v) { return v == 0.0f; });
}

// One signed-gradient step followed by projection into the box.
void signed_step(Tensor& x, const Tensor& grad, float step, const LinfBox& box) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = clamp_to_box(x[i] + step * sign_of(grad[i]), box, i);
}

}  // namespace

AttackResult fgsm(const Classifier& model, const Tensor& x, std::span<const int> labels, float epsilon) {
    require(std::isfinite(epsilon) && epsilon >= 0.0f, ErrorKind::contract, "fgsm epsilon must be >= 0");
    const Tensor grad = input_gradient(model, x, labels);
    AttackResult out{x, all_zero(grad)};
    if (out.zero_gradient || epsilon == 0.0f) return out;
    signed_step(out.x_adv, grad, epsilon, linf_box(x.data(), epsilon));
    return out;
}

AttackResult pgd(const Classifier& model, const Tensor& x, std::span<const int> labels, const AttackConfig& cfg) {
    cfg.validate();
    const LinfBox box = linf_box(x.data(), cfg.epsilon);
    AttackResult out{x, false};
    if (cfg.random_start) {
        Rng rng = Rng(cfg.seed).split("pgd-start");
        for (std::size_t i = 0; i < x.size(); ++i)
            out.x_adv[i] = clamp_to_box(x[i] + rng.uniform(-cfg.epsilon, cfg.epsilon), box, i);
    }
    for (std::size_t t = 0; t < cfg.iters; ++t) {
        const Tensor grad = input_gradient(model, out.x_adv, labels);
        if (all_zero(grad)) {
            out.zero_gradient = t == 0;
            break;
        }
        signed_step(out.x_adv, grad, cfg.step, box);
    }
    return out;
}

JsmaResult jsma(const Classifier& model, std::span<const float> x, int target, const AttackConfig& cfg) {
    AttackConfig c = cfg;
    c.kind = AttackKind::jsma;
    c.validate();
    const std::size_t classes = model.class_count();
    require(target >= 0 && static_cast<std::size_t>(target) < classes, ErrorKind::contract,
            "jsma target out of range");
    const std::size_t dim = element_count(model.input_shape());
    require(x.size() == dim, ErrorKind::dimension, "jsma input size does not match the classifier");

    Shape one{1}, many{classes};
    one.insert(one.end(), model.input_shape().begin(), model.input_shape().end());
    many.insert(many.end(), model.input_shape().begin(), model.input_shape().end());

    JsmaResult out{Tensor(model.input_shape(), {x.begin(), x.end()}), false, 0};
    const auto budget = static_cast<std::size_t>(std::floor(c.max_fraction * static_cast<float>(dim)));
    std::vector<bool> touched(dim, false);
    Tensor diagonal = Tensor::zeros({classes, classes});
    for (std::size_t k = 0; k < classes; ++k) diagonal[k * classes + k] = 1.0f;

    while (true) {
        if (model.predict(out.x_adv.reshaped(one))[0] == target) {
            out.success = true;
            break;
        }
        if (out.modified >= budget) break;
        // Row k of the replicated batch carries d softmax_k / dx.
        Tensor batch(many);
        for (std::size_t k = 0; k < classes; ++k)
            std::copy(out.x_adv.data().begin(), out.x_adv.data().end(), batch.ptr() + k * dim);
        Tape tape;
        auto params = model.bind(tape, false);
        Var xv = tape.leaf(std::move(batch), true);
        Var probs = ops::softmax(model.forward(xv, params).logits, 1);
        Var picked = ops::sum(ops::mul(probs, tape.constant(diagonal)));
        const Tensor jac = tape.backward(picked)[xv];

        std::size_t best = dim;
        float best_score = 0.0f;
        for (std::size_t i = 0; i < dim; ++i) {
            if (touched[i] || out.x_adv[i] >= 1.0f) continue;
            const float a = jac[static_cast<std::size_t>(target) * dim + i];
            float b = 0.0f;
            for (std::size_t k = 0; k < classes; ++k)
                if (static_cast<int>(k) != target) b += jac[k * dim + i];
            if (a < 0.0f || b > 0.0f) continue;
            const float score = a * std::abs(b);
            if (score > best_score) {
                best_score = score;
                best = i;
            }
        }
        if (best == dim) break;
        out.x_adv[best] = std::min(1.0f, out.x_adv[best] + c.theta);
        touched[best] = true;
        ++out.modified;
    }
    return out;
}

Dataset attack_dataset(const Classifier& model, const Dataset& ds, const AttackConfig& cfg) {
    cfg.validate();
    require(!ds.empty(), ErrorKind::contract, "cannot attack an empty dataset");
    Dataset out(ds.sample_shape(), ds.class_count(), ds.split());
    const std::size_t d = ds.sample_size();
    std::vector<float> adv(ds.size() * d);
    if (cfg.kind == AttackKind::jsma) {
        const Rng root = Rng(cfg.seed).split("jsma-targets");
        parallel_for(ds.size(), [&](std::size_t i) {
            Rng rng = root.split(i);
            const int y = ds.label(i);
            int t = static_cast<int>(rng.below(ds.class_count() - 1));
            if (t >= y) ++t;
            const auto r = jsma(model, ds.features(i), t, cfg);
            std::copy(r.x_adv.data().begin(), r.x_adv.data().end(), adv.begin() + static_cast<std::ptrdiff_t>(i * d));
        });
    } else {
        constexpr std::size_t chunk = 128;
        const std::size_t chunks = (ds.size() + chunk - 1) / chunk;
        parallel_for(chunks, [&](std::size_t c) {
            const std::size_t begin = c * chunk, end = std::min(ds.size(), begin + chunk);
            std::vector<std::size_t> idx(end - begin);
            std::iota(idx.begin(), idx.end(), begin);
            const Tensor x = ds.batch(idx);
            const auto labels = ds.labels_of(idx);
            AttackConfig local = cfg;
            local.seed = Rng(cfg.seed).split(c).next_u64();
            const auto r = cfg.kind == AttackKind::fgsm ? fgsm(model, x, labels, cfg.epsilon)
                                                        : pgd(model, x, labels, local);
            std::copy(r.x_adv.data().begin(), r.x_adv.data().end(),
                      adv.begin() + static_cast<std::ptrdiff_t>(begin * d));
        });
    }
    for (std::size_t i = 0; i < ds.size(); ++i)
        out.add(std::span<const float>(adv).subspan(i * d, d), ds.label(i));
    return out;
}

}  // namespace ladder
