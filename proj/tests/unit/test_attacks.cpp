#include <doctest.h>

#include <cmath>

#include "expect.hpp"
#include "ladder/attacks.hpp"
#include "support.hpp"

using namespace ladder;
using testing::kind_of;

namespace {

// Linear model on vector inputs: logits = x W + b with W laid out [in, out].
Classifier linear_model(std::size_t dim, std::vector<float> w, std::vector<float> b) {
    Classifier c({dim}, Sequential({layers::Flatten{}}), dim, b.size());
    c.head().parameters()[0] = Tensor({dim, b.size()}, std::move(w));
    c.head().parameters()[1] = Tensor::vector(std::move(b));
    return c;
}

const Dataset& desk_test() {
    static const Dataset ds = [] {
        const std::filesystem::path root = LADDER_SOURCE_DIR "/data/mnist-mini";
        return downsample_to_8x8(load_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte"));
    }();
    return ds;
}

const Classifier& desk_classifier() {
    static const Classifier c = [] {
        const std::filesystem::path root = LADDER_SOURCE_DIR "/data/mnist-mini";
        const Dataset train =
            downsample_to_8x8(load_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte"));
        Classifier m = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
        train_classifier(m, train, SgdConfig{0.01f, 0.9f, 0.0f, 32, 5}, 2);
        return m;
    }();
    return c;
}

Tensor first_batch(const Dataset& ds, std::size_t n, std::vector<int>& labels) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    labels = ds.labels_of(idx);
    return ds.batch(idx);
}

}  // namespace

TEST_CASE("fgsm and pgd stay inside the L-inf ball and [0, 1]") {
    const Classifier& model = desk_classifier();
    Rng rng(60);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t b = 1 + rng.below(6);
        const Tensor x = testing::uniform_tensor(rng, {b, 1, 8, 8}, 0.0f, 1.0f);
        std::vector<int> labels(b);
        for (auto& y : labels) y = static_cast<int>(rng.below(10));
        const float eps = rng.uniform(0.0f, 0.5f);
        AttackConfig cfg{AttackKind::pgd, eps, std::max(eps / 4.0f, 1e-6f), 1 + rng.below(8)};
        cfg.random_start = rng.uniform() < 0.5;
        cfg.seed = rng.next_u64();
        for (const Tensor& adv : {fgsm(model, x, labels, eps).x_adv, pgd(model, x, labels, cfg).x_adv}) {
            REQUIRE(adv.shape() == x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) {
                REQUIRE(std::abs(adv[i] - x[i]) <= eps);
                REQUIRE((adv[i] >= 0.0f && adv[i] <= 1.0f));
            }
        }
    }
}

TEST_CASE("every pgd iterate stays in the ball") {
    const Classifier& model = desk_classifier();
    std::vector<int> labels;
    const Tensor x = first_batch(desk_test(), 8, labels);
    for (std::size_t iters = 1; iters <= 12; ++iters) {
        const AttackConfig cfg{AttackKind::pgd, 0.3f, 0.07f, iters};
        const Tensor adv = pgd(model, x, labels, cfg).x_adv;
        for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(adv[i] - x[i]) <= 0.3f);
    }
}

TEST_CASE("pgd with one full step is fgsm") {
    const Classifier& model = desk_classifier();
    std::vector<int> labels;
    const Tensor x = first_batch(desk_test(), 50, labels);
    for (float eps : {0.05f, 0.1f, 0.3f, 0.7f}) {
        const AttackConfig cfg{AttackKind::pgd, eps, eps, 1};
        CHECK(pgd(model, x, labels, cfg).x_adv == fgsm(model, x, labels, eps).x_adv);
    }
}

TEST_CASE("fgsm with zero budget is the identity") {
    const Classifier& model = desk_classifier();
    std::vector<int> labels;
    const Tensor x = first_batch(desk_test(), 10, labels);
    CHECK(fgsm(model, x, labels, 0.0f).x_adv == x);
}

TEST_CASE("fgsm on a 1-D logistic model moves against the true class") {
    // logit_1 - logit_0 = 2 w x with w > 0, true class 1: the CE gradient in x is negative
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const float w = rng.uniform(0.1f, 3.0f);
        const Classifier model = linear_model(1, {-w, w}, {0.0f, 0.0f});
        const float x0 = rng.uniform(0.0f, 1.0f), eps = rng.uniform(0.01f, 0.5f);
        const auto r = fgsm(model, Tensor({1, 1}, {x0}), std::vector<int>{1}, eps);
        // exact up to f32 rounding; the box keeps the f32 step within eps
        const double expected = std::max(0.0, static_cast<double>(x0) - eps);
        CHECK(std::abs(r.x_adv[0] - expected) <= 1e-7);
        CHECK(x0 - r.x_adv[0] <= eps);
    }
}

TEST_CASE("zero gradient is flagged and leaves x unchanged") {
    const Classifier model = linear_model(2, {0, 0, 0, 0}, {0.0f, 1.0f});
    const Tensor x({1, 2}, {0.2f, 0.4f});
    const auto r = fgsm(model, x, std::vector<int>{1}, 0.3f);
    CHECK(r.zero_gradient);
    CHECK(r.x_adv == x);
    const auto p = pgd(model, x, std::vector<int>{1}, AttackConfig{AttackKind::pgd, 0.3f, 0.1f, 3});
    CHECK(p.zero_gradient);
    CHECK(p.x_adv == x);
}

TEST_CASE("pgd succeeds at least as often as fgsm on the desk classifier") {
    const Classifier& model = desk_classifier();
    std::vector<int> labels;
    const Tensor x = first_batch(desk_test(), 200, labels);
    auto successes = [&](const Tensor& adv) {
        const auto pred = model.predict(adv);
        std::size_t n = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) n += pred[i] != labels[i];
        return n;
    };
    // at eps = 0.3 both attacks already reach 200/200 here
    const AttackConfig cfg{AttackKind::pgd, 0.1f, 0.025f, 10};
    const std::size_t f = successes(fgsm(model, x, labels, 0.1f).x_adv);
    const std::size_t p = successes(pgd(model, x, labels, cfg).x_adv);
    MESSAGE("fgsm " << f << ", pgd " << p << " of 200");
    CHECK(p >= f);
}

TEST_CASE("jsma touches at most max_fraction of the features") {
    const Classifier& model = desk_classifier();
    const Dataset& ds = desk_test();
    Rng rng(62);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t i = rng.below(ds.size());
        AttackConfig cfg{AttackKind::jsma};
        cfg.theta = rng.uniform(0.1f, 1.0f);
        cfg.max_fraction = rng.uniform(0.02f, 0.3f);
        int target = static_cast<int>(rng.below(9));
        if (target >= ds.label(i)) ++target;
        const auto r = jsma(model, ds.features(i), target, cfg);
        CHECK(r.modified <= static_cast<std::size_t>(std::floor(cfg.max_fraction * 64.0f)));
        std::size_t changed = 0;
        for (std::size_t k = 0; k < 64; ++k) changed += r.x_adv[k] != ds.features(i)[k];
        CHECK(changed <= r.modified);
        for (float v : r.x_adv.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
        if (r.success) CHECK(model.predict(r.x_adv.reshaped({1, 1, 8, 8}))[0] == target);
    }
}

TEST_CASE("jsma on an input already in the target class does nothing") {
    const Classifier& model = desk_classifier();
    const Dataset& ds = desk_test();
    const int pred = model.predict(ds.batch(std::vector<std::size_t>{0}))[0];
    const auto r = jsma(model, ds.features(0), pred, AttackConfig{AttackKind::jsma});
    CHECK(r.success);
    CHECK(r.modified == 0);
    CHECK(std::equal(r.x_adv.data().begin(), r.x_adv.data().end(), ds.features(0).begin()));
}

TEST_CASE("jsma on a linear 2-D model succeeds iff theta covers the distance") {
    // class 1 wins once x0 > 0.5; feature 1 has no influence
    const Classifier model = linear_model(2, {0, 1, 0, 0}, {0.0f, -0.5f});
    Rng rng(63);
    for (int trial = 0; trial < 200; ++trial) {
        const float x0 = rng.uniform(0.0f, 0.49f), theta = rng.uniform(0.01f, 1.0f);
        if (std::abs(x0 + theta - 0.5f) < 1e-4f) continue;
        AttackConfig cfg{AttackKind::jsma};
        cfg.theta = theta;
        cfg.max_fraction = 0.5f;  // one feature
        const auto r = jsma(model, std::vector<float>{x0, 0.5f}, 1, cfg);
        CHECK(r.success == (x0 + theta > 0.5f));
        CHECK(r.modified == 1);
        CHECK(r.x_adv[1] == 0.5f);
    }
}

TEST_CASE("attack_dataset keeps labels and is deterministic") {
    const Classifier& model = desk_classifier();
    const Dataset sub = per_class_subset(desk_test(), 3, 1);
    for (AttackKind kind : {AttackKind::fgsm, AttackKind::pgd, AttackKind::jsma}) {
        AttackConfig cfg{kind};
        cfg.seed = 4;
        const Dataset a = attack_dataset(model, sub, cfg), b = attack_dataset(model, sub, cfg);
        CHECK(a.size() == sub.size());
        CHECK(a.all() == b.all());
        CHECK(std::equal(a.labels().begin(), a.labels().end(), sub.labels().begin()));
    }
}

TEST_CASE("attack config validation") {
    CHECK(kind_of([] { AttackConfig{AttackKind::pgd, 0.1f, 0.2f, 5}.validate(); }) == ErrorKind::configuration);
    CHECK(kind_of([] { AttackConfig{AttackKind::pgd, 0.1f, 0.05f, 0}.validate(); }) == ErrorKind::configuration);
    AttackConfig j{AttackKind::jsma};
    j.max_fraction = 1.5f;
    CHECK(kind_of([&] { j.validate(); }) == ErrorKind::configuration);
    CHECK(kind_of([] { parse_attack("cw"); }) == ErrorKind::configuration);
}
