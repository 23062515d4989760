#include <doctest.h>

#include <cmath>

#include "expect.hpp"
#include "ladder/data.hpp"
#include "ladder/svm.hpp"
#include "support.hpp"

using namespace ladder;
using testing::kind_of;

namespace {

AttentionSvm plain_svm(std::vector<float> w, float b, std::size_t kernel = 3) {
    return AttentionSvm(Tensor::zeros({1, 1, kernel}), Tensor::vector(std::move(w)), b, {0, 1});
}

struct Latents {
    Tensor z;
    std::vector<float> signs;
};

// Two separated blobs rescaled to roughly [-2, 2].
Latents blob_latents(std::size_t per_class, std::size_t dim, float separation, std::uint64_t seed) {
    const Dataset ds = synth_blobs(2, per_class, dim, separation, seed);
    Latents out{ds.all(), {}};
    for (auto& v : out.z.data()) v = 4.0f * v - 2.0f;
    for (int y : ds.labels()) out.signs.push_back(y == 1 ? 1.0f : -1.0f);
    return out;
}

double norm(const Tensor& t) {
    double s = 0.0;
    for (float v : t.data()) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("zero kernel gives uniform attention") {
    for (std::size_t f : {1u, 2u, 5u, 32u}) {
        const AttentionSvm svm = plain_svm(std::vector<float>(f, 1.0f), 0.0f);
        Rng rng(f);
        const Tensor z = testing::uniform_tensor(rng, {f});
        for (float b : svm.attention(z.data())) CHECK(b == doctest::Approx(1.0 / static_cast<double>(f)));
    }
}

TEST_CASE("margin arithmetic examples") {
    // F = 2, z = (1, -1): z_att = (0.5, -0.5), read out through unit w
    CHECK(plain_svm({1, 0}, 0).margin(std::vector<float>{1, -1}) == doctest::Approx(0.5));
    CHECK(plain_svm({0, 1}, 0).margin(std::vector<float>{1, -1}) == doctest::Approx(-0.5));
    CHECK(plain_svm({1, 0}, 0).margin(std::vector<float>{-2, 0}) == doctest::Approx(-1.0));
    const AttentionSvm s = plain_svm({3, 4}, 0);
    CHECK(s.d()[0] == doctest::Approx(0.6));
    CHECK(s.d()[1] == doctest::Approx(0.8));
}

TEST_CASE("attention is a positive distribution for random kernels and latents") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t f = 1 + rng.below(40);
        const AttentionSvm svm(testing::uniform_tensor(rng, {1, 1, 3}), testing::uniform_tensor(rng, {f}), 0.1f,
                               {2, 5});
        const Tensor z = testing::uniform_tensor(rng, {f}, -5, 5);
        const auto beta = svm.attention(z.data());
        REQUIRE(beta.size() == f);
        double total = 0.0;
        for (float b : beta) {
            CHECK(b > 0.0f);
            total += b;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("a latent constructed on the hyperplane has zero margin") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t f = 2 + rng.below(10);
        const Tensor w = testing::away_from_zero(rng, {f}, 0.2f);
        const float b = rng.uniform(-1, 1);
        const AttentionSvm svm(Tensor::zeros({1, 1, 3}), w, b, {0, 1});
        Tensor z = testing::uniform_tensor(rng, {f});
        // uniform beta: g = (w . z) / F + b; solve for the last coordinate
        double partial = 0.0;
        for (std::size_t i = 0; i + 1 < f; ++i) partial += static_cast<double>(w[i]) * z[i];
        z[f - 1] = static_cast<float>((-b * static_cast<double>(f) - partial) / w[f - 1]);
        CHECK(std::abs(svm.margin(z.data())) <= 1e-5f);
    }
}

TEST_CASE("frozen-beta margin increases along beta * d") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t f = 2 + rng.below(12);
        const AttentionSvm svm(testing::uniform_tensor(rng, {1, 1, 3}), testing::away_from_zero(rng, {f}),
                               rng.uniform(-1, 1), {0, 1});
        const Tensor z = testing::uniform_tensor(rng, {f});
        const auto beta = svm.attention(z.data());
        float prev = -INFINITY;
        for (float eps : {0.0f, 0.5f, 1.0f, 2.0f, 4.0f, 8.0f}) {
            std::vector<float> moved(f);
            for (std::size_t i = 0; i < f; ++i) moved[i] = z[i] + eps * beta[i] * svm.d()[i];
            const float g = svm.margin_with(moved, beta);
            CHECK(g > prev);
            prev = g;
        }
    }
}

TEST_CASE("training on separable blobs") {
    const Latents data = blob_latents(200, 2, 10.0f, 4);
    const SvmConfig cfg{};
    const AttentionSvm svm = train_attention_svm(data.z, data.signs, cfg);
    CHECK(svm_accuracy(svm, data.z, data.signs) >= 0.99f);
    CHECK(norm(svm.d()) == doctest::Approx(1.0).epsilon(1e-6));
    const std::size_t f = data.z.dim(1);
    std::size_t positive = 0, scored = 0;
    for (std::size_t i = 0; i < data.signs.size(); ++i) {
        if (data.signs[i] < 0) continue;
        ++positive;
        scored += svm.margin(std::span<const float>(data.z.data()).subspan(i * f, f)) > 0.0f;
    }
    CHECK(scored == positive);

    SUBCASE("flipping every label negates the normal") {
        std::vector<float> flipped = data.signs;
        for (float& s : flipped) s = -s;
        const AttentionSvm other = train_attention_svm(data.z, flipped, cfg);
        double dot = 0.0;
        for (std::size_t i = 0; i < f; ++i) dot += static_cast<double>(svm.d()[i]) * other.d()[i];
        CHECK(dot == doctest::Approx(-1.0).epsilon(0.05));
    }
}

TEST_CASE("unit normal after training on random separable data") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const Latents data = blob_latents(30, 2 + rng.below(6), 6.0f, rng.next_u64());
        SvmConfig cfg;
        cfg.epochs = 30;
        const AttentionSvm svm = train_attention_svm(data.z, data.signs, cfg);
        CHECK(norm(svm.d()) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("training errors") {
    const Latents data = blob_latents(10, 2, 10.0f, 1);
    SUBCASE("single class") {
        std::vector<float> all_pos(data.signs.size(), 1.0f);
        CHECK(kind_of([&] { train_attention_svm(data.z, all_pos, SvmConfig{}); }) == ErrorKind::degeneracy);
    }
    SUBCASE("all-zero latents leave w at zero") {
        CHECK(kind_of([&] { train_attention_svm(Tensor::zeros(data.z.shape()), data.signs, SvmConfig{}); }) ==
              ErrorKind::collapse);
    }
    SUBCASE("bad labels and shapes") {
        std::vector<float> bad = data.signs;
        bad[0] = 0.5f;
        CHECK(kind_of([&] { train_attention_svm(data.z, bad, SvmConfig{}); }) == ErrorKind::contract);
        CHECK(kind_of([&] { plain_svm({1, 0}, 0).margin(std::vector<float>{1, 2, 3}); }) == ErrorKind::dimension);
    }
    SUBCASE("config") {
        SvmConfig cfg;
        cfg.kernel = 2;
        CHECK(kind_of([&] { cfg.validate(); }) == ErrorKind::configuration);
    }
}

TEST_CASE("orientation toward a class of the pair") {
    const AttentionSvm svm(Tensor::zeros({1, 1, 3}), Tensor::vector({1, -2}), 0.5f, {3, 7});
    const std::vector<float> z{0.3f, 0.9f};
    CHECK(svm.toward(7).margin(z) == svm.margin(z));
    const AttentionSvm other = svm.toward(3);
    CHECK(other.margin(z) == doctest::Approx(-svm.margin(z)));
    CHECK(other.pair() == ClassPair{7, 3});
    CHECK(kind_of([&] { svm.toward(4); }) == ErrorKind::contract);
}

TEST_CASE("svm state round-trips") {
    Rng rng(5);
    const AttentionSvm svm(testing::uniform_tensor(rng, {1, 1, 3}), testing::uniform_tensor(rng, {6}), -0.25f, {2, 9});
    const AttentionSvm back = AttentionSvm::from_state(svm.state());
    CHECK(back.kernel() == svm.kernel());
    CHECK(back.w() == svm.w());
    CHECK(back.b() == svm.b());
    CHECK(back.pair() == svm.pair());
    CHECK(back.d() == svm.d());
}

TEST_CASE("svm bank trains unordered pairs once") {
    const Dataset ds = synth_blobs(3, 40, 4, 8.0f, 6);
    SvmConfig cfg;
    cfg.epochs = 20;
    SvmBank bank(ds.all(), std::vector<int>(ds.labels().begin(), ds.labels().end()), 3, cfg, 20);
    const AttentionSvm& a = bank.get(0, 2);
    CHECK(a.pair() == ClassPair{0, 2});
    CHECK(&bank.get(2, 0) == &a);
    CHECK(bank.trained_count() == 1);
    const std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {0, 2}};
    bank.prepare(pairs);
    CHECK(bank.trained_count() == 3);
    CHECK(kind_of([&] { bank.get(1, 1); }) == ErrorKind::contract);
    CHECK(kind_of([&] { bank.get(0, 3); }) == ErrorKind::contract);

    const auto dir = testing::scratch_dir("bank");
    bank.save(dir / "svms.ckpt");
    const auto loaded = SvmBank::load(dir / "svms.ckpt");
    REQUIRE(loaded.size() == 3);
    for (const auto& svm : loaded) {
        const auto& key = svm.pair();
        CHECK(bank.cache().at({key.negative, key.positive}).w() == svm.w());
    }
}
