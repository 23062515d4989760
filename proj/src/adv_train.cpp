#include "ladder/adv_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ladder/attacks.hpp"
#include "ladder/csv.hpp"
#include "ladder/rng.hpp"

namespace ladder {

void AdvTrainConfig::validate() const {
    require(alpha_mix >= 0.0f && alpha_mix <= 1.0f, ErrorKind::configuration, "alpha_mix must be in [0, 1]");
    sgd.validate();
    if (regularizer == Regularizer::trades) {
        require(trades_lambda > 0.0f, ErrorKind::configuration, "trades lambda must be positive");
        require(trades_epsilon > 0.0f, ErrorKind::configuration, "trades epsilon must be positive");
    }
}

float mixed_loss(float clean_loss, float adv_loss, float alpha_mix) {
    require(std::isfinite(clean_loss) && std::isfinite(adv_loss), ErrorKind::numeric, "mixed_loss of non-finite input");
    require(alpha_mix >= 0.0f && alpha_mix <= 1.0f, ErrorKind::contract, "alpha_mix must be in [0, 1]");
    return alpha_mix * clean_loss + (1.0f - alpha_mix) * adv_loss;
}

Var mixed_loss(const Var& clean_loss, const Var& adv_loss, float alpha_mix) {
    require(alpha_mix >= 0.0f && alpha_mix <= 1.0f, ErrorKind::contract, "alpha_mix must be in [0, 1]");
    return ops::add(ops::scale(clean_loss, alpha_mix), ops::scale(adv_loss, 1.0f - alpha_mix));
}

Var trades_loss(const Classifier& model, std::span<const Var> params, const Var& x, const Var& x_adv,
                std::span<const int> labels, float lambda) {
    require(x.shape() == x_adv.shape(), ErrorKind::dimension, "x_adv must have the shape of x");
    require(lambda >= 0.0f, ErrorKind::contract, "trades lambda must be non-negative");
    Var clean_logits = model.forward(x, params).logits;
    Var ce = ops::cross_entropy(clean_logits, labels);
    if (lambda == 0.0f) return ce;
    Var adv_logits = model.forward(x_adv, params).logits;
    return ops::add(ce, ops::scale(ops::kl_divergence(clean_logits, adv_logits), lambda));
}

float trades_loss(const Classifier& model, const Tensor& x, const Tensor& x_adv, std::span<const int> labels,
                  float lambda) {
    Tape tape;
    auto params = model.bind(tape, false);
    return trades_loss(model, params, tape.constant(x), tape.constant(x_adv), labels, lambda).value().item();
}

std::string AdvTrainLog::csv() const {
    CsvWriter out({"epoch", "clean_loss", "adv_loss", "mixed_loss"});
    for (std::size_t e = 0; e < mixed_loss.size(); ++e)
        out.row({std::to_string(e), format_float(clean_loss[e]),
                 adv_loss.empty() ? std::string() : format_float(adv_loss[e]), format_float(mixed_loss[e])});
    return out.text();
}

AdvTrainLog adversarial_train(Classifier& model, const Dataset& clean, const Dataset& adv, const AdvTrainConfig& cfg,
                              std::uint64_t seed) {
    cfg.validate();
    require(!clean.empty(), ErrorKind::contract, "adversarial training needs clean data");
    require(!adv.empty() || cfg.alpha_mix == 1.0f, ErrorKind::contract,
            "an empty adversarial set is only allowed with alpha_mix = 1");
    Shape batch_shape{1};
    batch_shape.insert(batch_shape.end(), clean.sample_shape().begin(), clean.sample_shape().end());
    model.check_input(batch_shape);
    require(adv.empty() || adv.sample_shape() == clean.sample_shape(), ErrorKind::dimension,
            "adversarial and clean samples differ in shape");
    AdvTrainLog log;
    SgdState state;
    const std::size_t n = clean.size(), bs = cfg.sgd.batch_size;

    // Adversarial batches walk their own shuffled passes, independent of the clean order.
    const Rng adv_root = Rng(seed).split("adv-batches");
    std::vector<std::size_t> adv_order;
    std::size_t adv_cursor = 0, adv_pass = 0;
    auto next_adv = [&](std::size_t count) {
        std::vector<std::size_t> idx;
        while (idx.size() < count) {
            if (adv_cursor == adv_order.size()) {
                adv_order.resize(adv.size());
                std::iota(adv_order.begin(), adv_order.end(), 0);
                Rng rng = adv_root.split(adv_pass++);
                rng.shuffle(std::span<std::size_t>(adv_order));
                adv_cursor = 0;
            }
            idx.push_back(adv_order[adv_cursor++]);
        }
        return idx;
    };

    for (std::size_t epoch = 0; epoch < cfg.sgd.epochs; ++epoch) {
        const auto order = epoch_order(n, seed, epoch);
        double clean_total = 0.0, adv_total = 0.0, mixed_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += bs) {
            const std::size_t end = std::min(n, begin + bs);
            const auto idx = std::span<const std::size_t>(order).subspan(begin, end - begin);
            const auto labels = clean.labels_of(idx);
            const Tensor x = clean.batch(idx);
            try {
                Tape tape;
                auto params = model.bind(tape, true);
                Var clean_term;
                if (cfg.regularizer == Regularizer::trades) {
                    const Tensor x_adv = fgsm(model, x, labels, cfg.trades_epsilon).x_adv;
                    clean_term = trades_loss(model, params, tape.constant(x), tape.constant(x_adv), labels,
                                             cfg.trades_lambda);
                } else {
                    clean_term = ops::cross_entropy(model.forward(tape.constant(x), params).logits, labels);
                }
                Var loss = clean_term;
                float adv_value = 0.0f;
                if (!adv.empty()) {
                    const auto adv_idx = next_adv(idx.size());
                    const auto adv_labels = adv.labels_of(adv_idx);
                    Var adv_term =
                        ops::cross_entropy(model.forward(tape.constant(adv.batch(adv_idx)), params).logits, adv_labels);
                    adv_value = adv_term.value().item();
                    loss = mixed_loss(clean_term, adv_term, cfg.alpha_mix);
                }
                const float clean_value = clean_term.value().item(), mixed_value = loss.value().item();
                require(std::isfinite(mixed_value), ErrorKind::numeric, "loss is not finite");
                auto grads = tape.backward(loss);
                sgd_update(model, collect_grads(grads, params), cfg.sgd, state);
                clean_total += clean_value;
                adv_total += adv_value;
                mixed_total += mixed_value;
                ++batches;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::numeric) throw;
                fail(ErrorKind::numeric,
                     "adversarial training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
        }
        const double b = static_cast<double>(batches);
        log.clean_loss.push_back(static_cast<float>(clean_total / b));
        if (!adv.empty()) log.adv_loss.push_back(static_cast<float>(adv_total / b));
        log.mixed_loss.push_back(static_cast<float>(mixed_total / b));
    }
    return log;
}

}  // namespace ladder
