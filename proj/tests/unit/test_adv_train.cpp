#include <doctest.h>

#include <cmath>

#include "expect.hpp"
#include "ladder/adv_train.hpp"
#include "support.hpp"

using namespace ladder;
using testing::kind_of;

namespace {

std::vector<Tensor> snapshot(const Classifier& c) {
    std::vector<Tensor> out;
    for (const Tensor* p : c.parameters()) out.push_back(*p);
    return out;
}

float ce(const Classifier& model, const Tensor& x, std::span<const int> labels) {
    Tape tape;
    const auto params = model.bind(tape, false);
    return ops::cross_entropy(model.forward(tape.constant(x), params).logits, labels).value()[0];
}

}  // namespace

TEST_CASE("mixed loss examples") {
    CHECK(mixed_loss(1.0f, 2.0f, 0.5f) == 1.5f);
    CHECK(mixed_loss(1.25f, 7.0f, 1.0f) == 1.25f);
    CHECK(mixed_loss(1.25f, 7.0f, 0.0f) == 7.0f);
    CHECK(kind_of([] { mixed_loss(NAN, 1.0f, 0.5f); }) == ErrorKind::numeric);
    CHECK(kind_of([] { mixed_loss(1.0f, INFINITY, 0.5f); }) == ErrorKind::numeric);
    CHECK(kind_of([] { mixed_loss(1.0f, 1.0f, 1.5f); }) == ErrorKind::contract);

    Tape tape;
    const Var a = tape.constant(Tensor::scalar(1.25f)), b = tape.constant(Tensor::scalar(7.0f));
    CHECK(mixed_loss(a, b, 1.0f).value()[0] == 1.25f);
    CHECK(mixed_loss(a, b, 0.0f).value()[0] == 7.0f);
}

TEST_CASE("mixed loss is linear in alpha for fixed batches") {
    const Dataset ds = synth_blobs(3, 20, 4, 3.0f, 5);
    const Classifier model = make_classifier(Profile::blobs_mlp, {4}, 3, 2);
    Rng rng(70);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> ci(8), ai(8);
        for (auto& i : ci) i = rng.below(ds.size());
        for (auto& i : ai) i = rng.below(ds.size());
        Tensor adv = ds.batch(ai);
        for (auto& v : adv.data()) v = std::clamp(v + rng.uniform(-0.2f, 0.2f), 0.0f, 1.0f);
        const float jc = ce(model, ds.batch(ci), ds.labels_of(ci)), ja = ce(model, adv, ds.labels_of(ai));
        const float j0 = mixed_loss(jc, ja, 0.0f), j5 = mixed_loss(jc, ja, 0.5f), j1 = mixed_loss(jc, ja, 1.0f);
        CHECK(j5 == doctest::Approx(0.5 * (j0 + j1)).epsilon(1e-6));
        const float a = rng.uniform(0.0f, 1.0f);
        CHECK(mixed_loss(jc, ja, a) == doctest::Approx(j0 + a * (j1 - j0)).epsilon(1e-6));
    }
}

TEST_CASE("trades degeneracies") {
    const Dataset ds = synth_blobs(3, 10, 4, 3.0f, 6);
    const Classifier model = make_classifier(Profile::blobs_mlp, {4}, 3, 3);
    const Tensor x = ds.all();
    const auto labels = std::vector<int>(ds.labels().begin(), ds.labels().end());
    Rng rng(71);
    Tensor x_adv = x;
    for (auto& v : x_adv.data()) v = rng.uniform(0.0f, 1.0f);
    const float clean = ce(model, x, labels);
    CHECK(trades_loss(model, x, x, labels, 1.0f) == doctest::Approx(clean).epsilon(1e-6));
    CHECK(trades_loss(model, x, x_adv, labels, 0.0f) == doctest::Approx(clean).epsilon(1e-6));
    CHECK(trades_loss(model, x, x_adv, labels, 1.0f) > clean);
    CHECK(kind_of([&] { trades_loss(model, x, Tensor::zeros({2, 4}), labels, 1.0f); }) == ErrorKind::dimension);
}

TEST_CASE("KL divergence is non-negative on random pairs") {
    Rng rng(72);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t rows = 1 + rng.below(3), cols = 2 + rng.below(9);
        const float spread = rng.uniform(0.1f, 20.0f);
        Tape tape;
        const Var p = tape.constant(testing::uniform_tensor(rng, {rows, cols}, -spread, spread));
        const Var q = tape.constant(testing::uniform_tensor(rng, {rows, cols}, -spread, spread));
        REQUIRE(ops::kl_divergence(p, q).value()[0] >= 0.0f);
    }
}

TEST_CASE("alpha 1 with an empty adversarial set follows train_classifier") {
    const Dataset ds = synth_blobs(3, 20, 4, 3.0f, 8);
    const SgdConfig sgd{0.05f, 0.9f, 0.0f, 8, 4};
    Classifier a = make_classifier(Profile::blobs_mlp, {4}, 3, 4);
    Classifier b = a;
    const auto plain = train_classifier(a, ds, sgd, 9);
    AdvTrainConfig cfg;
    cfg.alpha_mix = 1.0f;
    cfg.sgd = sgd;
    const auto mixed = adversarial_train(b, ds, Dataset(ds.sample_shape(), 3), cfg, 9);
    CHECK(snapshot(a) == snapshot(b));
    CHECK(mixed.clean_loss == plain.losses);
    CHECK(mixed.mixed_loss == plain.losses);
}

TEST_CASE("adversarial training reproducibility and log") {
    const Dataset ds = synth_blobs(3, 20, 4, 3.0f, 8);
    const Dataset adv = synth_blobs(3, 10, 4, 3.0f, 9);
    AdvTrainConfig cfg;
    cfg.sgd = SgdConfig{0.05f, 0.9f, 0.0f, 8, 3};
    for (Regularizer reg : {Regularizer::none, Regularizer::trades}) {
        cfg.regularizer = reg;
        Classifier a = make_classifier(Profile::blobs_mlp, {4}, 3, 4), b = a;
        const auto la = adversarial_train(a, ds, adv, cfg, 10);
        const auto lb = adversarial_train(b, ds, adv, cfg, 10);
        CHECK(snapshot(a) == snapshot(b));
        REQUIRE(la.mixed_loss.size() == 3);
        CHECK(la.mixed_loss.back() == lb.mixed_loss.back());
        for (std::size_t e = 0; e < 3; ++e)
            CHECK(la.mixed_loss[e] == doctest::Approx(mixed_loss(la.clean_loss[e], la.adv_loss[e], 0.5f)));
        const std::string csv = la.csv();
        CHECK(csv.rfind("epoch,clean_loss,adv_loss,mixed_loss\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    }
}

TEST_CASE("adversarial training preconditions") {
    const Dataset ds = synth_blobs(3, 5, 4, 3.0f, 8);
    Classifier m = make_classifier(Profile::blobs_mlp, {4}, 3, 4);
    AdvTrainConfig cfg;
    cfg.sgd = SgdConfig{0.05f, 0.9f, 0.0f, 8, 1};
    CHECK(kind_of([&] { adversarial_train(m, ds, Dataset(ds.sample_shape(), 3), cfg, 1); }) == ErrorKind::contract);
    CHECK(kind_of([&] { adversarial_train(m, ds, synth_blobs(3, 5, 2, 3.0f, 1), cfg, 1); }) == ErrorKind::dimension);
    cfg.alpha_mix = -0.1f;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    cfg.alpha_mix = 0.5f;
    cfg.regularizer = Regularizer::trades;
    cfg.trades_lambda = 0.0f;
    CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
}
