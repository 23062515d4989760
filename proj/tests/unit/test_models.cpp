#include <doctest.h>

#include <cmath>

#include "expect.hpp"
#include "ladder/models.hpp"
#include "support.hpp"

using namespace ladder;
using testing::kind_of;

namespace {

std::vector<Tensor> snapshot(const Classifier& c) {
    std::vector<Tensor> out;
    for (const Tensor* p : c.parameters()) out.push_back(*p);
    return out;
}

Dataset first_rows(const Dataset& ds, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return ds.subset(idx);
}

}  // namespace

TEST_CASE("classifier shapes per profile") {
    SUBCASE("desk") {
        const Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
        CHECK(c.latent_dim() == 32);
        Tape tape;
        const auto params = c.bind(tape, false);
        Rng rng(1);
        const auto out = c.forward(tape.constant(testing::uniform_tensor(rng, {3, 1, 8, 8}, 0, 1)), params);
        CHECK(out.z.shape() == Shape{3, 32});
        CHECK(out.logits.shape() == Shape{3, 10});
    }
    SUBCASE("lenet") {
        const Classifier c = make_classifier(Profile::lenet, {1, 28, 28}, 10, 1);
        CHECK(c.latent_dim() == 500);
        CHECK(c.latent(Tensor::zeros({2, 1, 28, 28})).shape() == Shape{2, 500});
    }
    SUBCASE("mlp") {
        const Classifier c = make_classifier(Profile::blobs_mlp, {2}, 3, 1);
        CHECK(c.logits(Tensor::zeros({4, 2})).shape() == Shape{4, 3});
    }
}

TEST_CASE("latent is exactly the input of the final linear layer") {
    Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 3);
    Rng rng(2);
    const Tensor x = testing::uniform_tensor(rng, {5, 1, 8, 8}, 0, 1);
    CHECK(c.head_logits(c.latent(x)) == c.logits(x));
}

TEST_CASE("zero-weight head ties every logit and predicts index 0") {
    Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 4);
    for (Tensor& p : c.head().parameters()) p = Tensor::zeros(p.shape());
    Rng rng(5);
    const auto pred = c.predict(testing::uniform_tensor(rng, {6, 1, 8, 8}, 0, 1));
    CHECK(pred == std::vector<int>(6, 0));
    CHECK(argmax(std::vector<float>{1, 3, 3, 2}) == 1);
}

TEST_CASE("input shape mismatch is a dimension error") {
    const Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
    CHECK(kind_of([&] { c.logits(Tensor::zeros({2, 1, 7, 8})); }) == ErrorKind::dimension);
    const Generator g = make_generator(Profile::desk_cnn, c, 1);
    CHECK(kind_of([&] { g.decode(Tensor::zeros({2, 31})); }) == ErrorKind::dimension);
}

TEST_CASE("train_classifier on separated blobs") {
    const Dataset all = synth_blobs(2, 200, 2, 10.0f, 7);
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < all.size(); ++i) (i % 4 == 0 ? te : tr).push_back(i);
    const Dataset train = all.subset(tr), test = all.subset(te);
    Classifier c = make_classifier(Profile::blobs_mlp, {2}, 2, 8);
    const auto log = train_classifier(c, train, SgdConfig{0.1f, 0.9f, 0.0f, 16, 20}, 9);
    REQUIRE(log.losses.size() == 20);
    CHECK(log.losses.back() < log.losses.front());
    const auto pred = c.predict(test);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < test.size(); ++i) hit += pred[i] == test.label(i);
    CHECK(static_cast<double>(hit) / static_cast<double>(test.size()) >= 0.99);
}

TEST_CASE("zero epochs leaves parameters unchanged") {
    Classifier c = make_classifier(Profile::blobs_mlp, {2}, 2, 8);
    const auto before = snapshot(c);
    const auto log = train_classifier(c, synth_blobs(2, 10, 2, 3.0f, 1), SgdConfig{0.1f, 0.9f, 0.0f, 4, 0}, 1);
    CHECK(log.losses.empty());
    CHECK(snapshot(c) == before);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const Dataset ds = synth_blobs(3, 30, 2, 4.0f, 2);
    auto run = [&] {
        Classifier c = make_classifier(Profile::blobs_mlp, {2}, 3, 5);
        train_classifier(c, ds, SgdConfig{0.05f, 0.5f, 0.0f, 8, 3}, 6);
        return snapshot(c);
    };
    CHECK(run() == run());
}

TEST_CASE("generator outputs lie in [0, 1] with the classifier input shape") {
    const Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
    const Generator g = make_generator(Profile::desk_cnn, c, 2);
    Rng rng(3);
    Tensor z({50, 32});
    for (auto& v : z.data()) v = static_cast<float>(std::sqrt(5.0) * rng.normal());
    const Tensor x = g.decode(z);
    CHECK(x.shape() == Shape{50, 1, 8, 8});
    for (float v : x.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
    CHECK(g.decode(Tensor::zeros({32})).shape() == Shape{1, 1, 8, 8});
}

TEST_CASE("generator memorises a single sample and leaves the classifier frozen") {
    const std::filesystem::path root = LADDER_SOURCE_DIR "/data/mnist-mini";
    const Dataset one = first_rows(
        downsample_to_8x8(load_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte")), 0, 1);
    Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
    train_classifier(c, one, SgdConfig{0.01f, 0.0f, 0.0f, 1, 1}, 1);
    const auto before = snapshot(c);
    Generator g = make_generator(Profile::desk_cnn, c, 2);
    const auto log = train_generator(g, one, c, SgdConfig{0.5f, 0.9f, 0.0f, 1, 600}, 3);
    REQUIRE(log.losses.size() == 600);
    CHECK(reconstruction_mse(g, c, one) < 1e-3f);

    // the L1 kernel drives background pixels with a constant-size gradient; it
    // trains, but slowly, so only a decrease is asserted
    Generator g1 = make_generator(Profile::desk_cnn, c, 2, 1);
    const auto log1 = train_generator(g1, one, c, SgdConfig{0.001f, 0.9f, 0.0f, 1, 300}, 3);
    CHECK(log1.losses.back() < log1.losses.front());
    CHECK(snapshot(c) == before);
}

TEST_CASE("train_generator rejects a latent-dim mismatch") {
    const Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
    const Classifier wide = make_classifier(Profile::lenet, {1, 28, 28}, 10, 1);
    Generator g = make_generator(Profile::lenet, wide, 1);
    Dataset ds({1, 8, 8}, 10);
    ds.add(std::vector<float>(64, 0.5f), 0);
    CHECK(kind_of([&] { train_generator(g, ds, c, SgdConfig{0.1f, 0.0f, 0.0f, 1, 1}, 1); }) == ErrorKind::dimension);
}

TEST_CASE("norm exponent is restricted to 1 or 2") {
    const Classifier c = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
    Generator g = make_generator(Profile::desk_cnn, c, 1);
    CHECK(g.norm_p() == 2);
    g.set_norm_p(1);
    CHECK(g.norm_p() == 1);
    CHECK(kind_of([&] { g.set_norm_p(3); }) == ErrorKind::configuration);
}

TEST_CASE("model state round-trips through checkpoints") {
    const Classifier a = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 1);
    Classifier b = make_classifier(Profile::desk_cnn, {1, 8, 8}, 10, 2);
    const auto dir = testing::scratch_dir("models");
    save_checkpoint(dir / "c.ckpt", a.state());
    b.load_state(load_checkpoint(dir / "c.ckpt"));
    CHECK(snapshot(b) == snapshot(a));

    const Generator g = make_generator(Profile::desk_cnn, a, 3);
    Generator h = make_generator(Profile::desk_cnn, a, 4);
    h.load_state(g.state());
    CHECK(h.net().parameters() == g.net().parameters());

    Classifier lenet = make_classifier(Profile::lenet, {1, 28, 28}, 10, 1);
    CHECK(kind_of([&] { lenet.load_state(a.state()); }) == ErrorKind::dimension);
    CHECK(kind_of([&] { b.load_state(g.state()); }) == ErrorKind::format);
}
