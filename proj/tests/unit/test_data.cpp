#include <doctest.h>

#include <fstream>
#include <set>

#include "expect.hpp"
#include "ladder/data.hpp"
#include "support.hpp"

using namespace ladder;
using testing::kind_of;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string be32(std::uint32_t v) {
    return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

// Two 2x3 images and their labels, written by hand.
std::pair<std::filesystem::path, std::filesystem::path> tiny_idx(const std::filesystem::path& dir) {
    std::string images = be32(0x803) + be32(2) + be32(2) + be32(3);
    for (int b : {0, 255, 128, 1, 2, 3, 10, 20, 30, 40, 50, 254}) images.push_back(static_cast<char>(b));
    std::string labels = be32(0x801) + be32(2);
    labels.push_back(3);
    labels.push_back(7);
    write_bytes(dir / "img", images);
    write_bytes(dir / "lbl", labels);
    return {dir / "img", dir / "lbl"};
}

// Perceptron on the raw features; returns true once an epoch has no mistakes.
bool linearly_separated(const Dataset& ds) {
    std::vector<double> w(ds.sample_size() + 1, 0.0);
    for (int epoch = 0; epoch < 2000; ++epoch) {
        bool clean = true;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto x = ds.features(i);
            const double y = ds.label(i) == 1 ? 1.0 : -1.0;
            double s = w.back();
            for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x[k];
            if (y * s <= 0.0) {
                clean = false;
                for (std::size_t k = 0; k < x.size(); ++k) w[k] += y * x[k];
                w.back() += y;
            }
        }
        if (clean) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("load_idx accepts the IDX magics and scales bytes") {
    const auto dir = testing::scratch_dir("idx");
    const auto [img, lbl] = tiny_idx(dir);
    const Dataset ds = load_idx(img, lbl, Split::test);
    REQUIRE(ds.size() == 2);
    CHECK(ds.sample_shape() == Shape{1, 2, 3});
    CHECK(ds.split() == Split::test);
    CHECK(ds.features(0)[0] == 0.0f);
    CHECK(ds.features(0)[1] == 1.0f);
    CHECK(ds.features(0)[2] == doctest::Approx(128.0 / 255.0));
    CHECK(ds.label(0) == 3);
    CHECK(ds.label(1) == 7);
}

TEST_CASE("write_idx then load_idx is the identity on payload bytes") {
    const auto dir = testing::scratch_dir("idx_rt");
    const auto [img, lbl] = tiny_idx(dir);
    const Dataset ds = load_idx(img, lbl);
    write_idx(dir / "img2", dir / "lbl2", ds);
    CHECK(read_bytes(dir / "img2") == read_bytes(img));
    CHECK(read_bytes(dir / "lbl2") == read_bytes(lbl));
}

TEST_CASE("load_idx errors") {
    const auto dir = testing::scratch_dir("idx_err");
    const auto [img, lbl] = tiny_idx(dir);
    const std::string images = read_bytes(img), labels = read_bytes(lbl);

    SUBCASE("wrong magic") {
        write_bytes(dir / "bad", be32(0x801) + images.substr(4));
        CHECK(kind_of([&] { load_idx(dir / "bad", lbl); }) == ErrorKind::format);
        write_bytes(dir / "bad", be32(0x803) + labels.substr(4));
        CHECK(kind_of([&] { load_idx(img, dir / "bad"); }) == ErrorKind::format);
    }
    SUBCASE("truncated last image") {
        write_bytes(dir / "short", images.substr(0, images.size() - 1));
        CHECK(kind_of([&] { load_idx(dir / "short", lbl); }) == ErrorKind::length);
    }
    SUBCASE("count mismatch") {
        write_bytes(dir / "one", be32(0x801) + be32(1) + std::string(1, '\3'));
        CHECK(kind_of([&] { load_idx(img, dir / "one"); }) == ErrorKind::consistency);
    }
    SUBCASE("missing file") { CHECK(kind_of([&] { load_idx(dir / "nope", lbl); }) == ErrorKind::io); }
}

TEST_CASE("bundled MNIST subset loads with pixels in [0, 1]") {
    const std::filesystem::path root = LADDER_SOURCE_DIR "/data/mnist-mini";
    const Dataset ds = load_idx(root / "t10k-images-idx3-ubyte", root / "t10k-labels-idx1-ubyte", Split::test);
    CHECK(ds.size() == 1000);
    CHECK(ds.sample_shape() == Shape{1, 28, 28});
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (float v : ds.features(i)) REQUIRE((v >= 0.0f && v <= 1.0f));
    const Dataset small = downsample_to_8x8(ds);
    CHECK(small.sample_shape() == Shape{1, 8, 8});
    CHECK(small.size() == ds.size());
    for (std::size_t i = 0; i < small.size(); ++i) {
        CHECK(small.label(i) == ds.label(i));
        for (float v : small.features(i)) REQUIRE((v >= 0.0f && v <= 1.0f));
    }
}

TEST_CASE("downsampling averages 4x4 blocks of the padded image") {
    Dataset ds({1, 28, 28}, 10);
    std::vector<float> x(28 * 28, 0.0f);
    // padded rows/cols 4..7 form output pixel (1, 1); they are source rows/cols 2..5
    for (std::size_t r = 2; r < 6; ++r)
        for (std::size_t c = 2; c < 6; ++c) x[r * 28 + c] = 1.0f;
    x[0] = 1.0f;  // padded (2, 2): one of 16 cells of output pixel (0, 0)
    ds.add(x, 4);
    const Dataset small = downsample_to_8x8(ds);
    CHECK(small.features(0)[0] == doctest::Approx(1.0 / 16.0));
    CHECK(small.features(0)[9] == doctest::Approx(1.0));
    CHECK(small.features(0)[10] == 0.0f);
    CHECK(kind_of([&] { downsample_to_8x8(synth_blobs(2, 1, 2, 1.0f, 1)); }) == ErrorKind::dimension);
}

TEST_CASE("dataset clamps features and rejects bad labels") {
    Dataset ds({3}, 2);
    ds.add(std::vector<float>{-0.5f, 0.5f, 2.0f}, 1);
    CHECK(ds.features(0)[0] == 0.0f);
    CHECK(ds.features(0)[1] == 0.5f);
    CHECK(ds.features(0)[2] == 1.0f);
    CHECK(kind_of([&] { ds.add(std::vector<float>{0, 0, 0}, 2); }) == ErrorKind::contract);
    CHECK(kind_of([&] { ds.add(std::vector<float>{0, 0}, 0); }) == ErrorKind::dimension);
}

TEST_CASE("synth_blobs") {
    SUBCASE("separation 10 in 2-D is linearly separable") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) CHECK(linearly_separated(synth_blobs(2, 100, 2, 10.0f, seed)));
    }
    SUBCASE("determinism") {
        const Dataset a = synth_blobs(3, 20, 4, 5.0f, 9), b = synth_blobs(3, 20, 4, 5.0f, 9);
        CHECK(a.all() == b.all());
        CHECK(std::vector<int>(a.labels().begin(), a.labels().end()) ==
              std::vector<int>(b.labels().begin(), b.labels().end()));
        CHECK_FALSE(synth_blobs(3, 20, 4, 5.0f, 10).all() == a.all());
    }
    SUBCASE("per_class 1 gives class_count samples") {
        const Dataset ds = synth_blobs(5, 1, 3, 2.0f, 2);
        CHECK(ds.size() == 5);
        CHECK(ds.class_counts() == std::vector<std::size_t>(5, 1));
    }
    SUBCASE("features in [0, 1]") {
        const Dataset ds = synth_blobs(4, 50, 2, 3.0f, 4);
        const Tensor all = ds.all();
        for (float v : all.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
    }
    SUBCASE("preconditions") {
        CHECK(kind_of([] { synth_blobs(1, 5, 2, 1.0f, 1); }) == ErrorKind::contract);
        CHECK(kind_of([] { synth_blobs(2, 0, 2, 1.0f, 1); }) == ErrorKind::contract);
        CHECK(kind_of([] { synth_blobs(2, 5, 2, 0.0f, 1); }) == ErrorKind::contract);
    }
}

TEST_CASE("per_class_subset property: exact counts and no duplicates") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t classes = 2 + rng.below(4), population = 5 + rng.below(20);
        Dataset ds({2}, classes);
        // Unique features encode the source index.
        for (std::size_t i = 0; i < classes * population; ++i)
            ds.add(std::vector<float>{static_cast<float>(i) / 1000.0f, 0.0f}, static_cast<int>(i % classes));
        const std::size_t per_class = 1 + rng.below(population);
        const Dataset sub = per_class_subset(ds, per_class, rng.next_u64());
        CHECK(sub.size() == classes * per_class);
        CHECK(sub.class_counts() == std::vector<std::size_t>(classes, per_class));
        std::set<float> seen;
        for (std::size_t i = 0; i < sub.size(); ++i) seen.insert(sub.features(i)[0]);
        CHECK(seen.size() == sub.size());
    }
}

TEST_CASE("per_class_subset examples") {
    const std::filesystem::path root = LADDER_SOURCE_DIR "/data/mnist-mini";
    const Dataset train = load_idx(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte");
    SUBCASE("full class size restores each class as a set") {
        const Dataset blobs = synth_blobs(3, 7, 2, 4.0f, 3);
        const Dataset sub = per_class_subset(blobs, 7, 11);
        std::multiset<std::vector<float>> a, b;
        for (std::size_t i = 0; i < blobs.size(); ++i) {
            auto f = blobs.features(i);
            a.insert({f.begin(), f.end()});
            f = sub.features(i);
            b.insert({f.begin(), f.end()});
        }
        CHECK(a == b);
    }
    SUBCASE("SVM subset of two classes x 200") {
        CHECK(per_class_subset(synth_blobs(2, 300, 2, 4.0f, 5), 200, 1).size() == 400);
    }
    SUBCASE("insufficient population is a budget error") {
        CHECK(kind_of([&] { per_class_subset(train, 450, 1); }) == ErrorKind::budget);
        CHECK(per_class_subset(train, 200, 1).size() == 2000);
    }
}

TEST_CASE("dataset manifest round-trip") {
    const auto dir = testing::scratch_dir("manifest");
    const auto [img, lbl] = tiny_idx(dir);
    DatasetManifest m{img, lbl, Split::test, 10};
    m.write(dir / "ds.manifest");
    const DatasetManifest back = DatasetManifest::read(dir / "ds.manifest");
    CHECK(back.images == img);
    CHECK(back.labels == lbl);
    CHECK(back.split == Split::test);
    CHECK(back.class_count == 10);
    CHECK(back.load().size() == 2);
    write_bytes(dir / "broken.manifest", "images=" + img.string() + "\n");
    CHECK(kind_of([&] { DatasetManifest::read(dir / "broken.manifest"); }) == ErrorKind::configuration);
}
