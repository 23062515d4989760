#include "ladder/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "ladder/rng.hpp"

namespace ladder {

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "test") return Split::test;
    fail(ErrorKind::configuration, "unknown split '" + std::string(text) + "'");
}

Dataset::Dataset(Shape sample_shape, std::size_t class_count, Split split)
    : sample_shape_(std::move(sample_shape)), class_count_(class_count), split_(split) {
    require(!sample_shape_.empty(), ErrorKind::dimension, "dataset sample shape must be non-empty");
    sample_size_ = element_count(sample_shape_);
    require(sample_size_ > 0, ErrorKind::dimension, "dataset samples must have positive size");
    require(class_count_ >= 1, ErrorKind::contract, "dataset needs at least one class");
}

void Dataset::add(std::span<const float> x, int y) {
    require(x.size() == sample_size_, ErrorKind::dimension,
            "sample has " + std::to_string(x.size()) + " features, dataset expects " + std::to_string(sample_size_));
    require(y >= 0 && static_cast<std::size_t>(y) < class_count_, ErrorKind::contract,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(class_count_) + ")");
    for (float v : x) {
        require(!std::isnan(v), ErrorKind::numeric, "NaN feature in dataset sample");
        features_.push_back(std::clamp(v, 0.0f, 1.0f));
    }
    labels_.push_back(y);
}

std::span<const float> Dataset::features(std::size_t i) const {
    require(i < size(), ErrorKind::contract, "sample index out of range");
    return std::span<const float>(features_).subspan(i * sample_size_, sample_size_);
}

LabeledSample Dataset::at(std::size_t i) const {
    auto f = features(i);
    return {std::vector<float>(f.begin(), f.end()), labels_[i]};
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    require(!indices.empty(), ErrorKind::contract, "empty batch");
    Shape shape{indices.size()};
    shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
    Tensor out(std::move(shape));
    for (std::size_t k = 0; k < indices.size(); ++k) {
        auto f = features(indices[k]);
        std::copy(f.begin(), f.end(), out.ptr() + k * sample_size_);
    }
    return out;
}

Tensor Dataset::all() const {
    std::vector<std::size_t> idx(size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return batch(idx);
}

std::vector<int> Dataset::labels_of(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels_.at(i));
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out(sample_shape_, class_count_, split_);
    for (std::size_t i : indices) out.add(features(i), labels_.at(i));
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(class_count_, 0);
    for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
    return counts;
}

std::vector<std::size_t> Dataset::indices_of_class(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] == label) out.push_back(i);
    return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::filesystem::path& path) {
    require(offset + 4 <= bytes.size(), ErrorKind::length, path.string() + ": truncated IDX header");
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
    return v;
}

void put_be32(std::string& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path, Split split,
                 std::size_t class_count) {
    const std::string images = read_file(images_path);
    const std::string labels = read_file(labels_path);

    const std::uint32_t image_magic = read_be32(images, 0, images_path);
    require(image_magic == kImageMagic, ErrorKind::format,
            images_path.string() + ": expected image magic 0x00000803");
    const std::uint32_t label_magic = read_be32(labels, 0, labels_path);
    require(label_magic == kLabelMagic, ErrorKind::format,
            labels_path.string() + ": expected label magic 0x00000801");

    const std::size_t count = read_be32(images, 4, images_path);
    const std::size_t rows = read_be32(images, 8, images_path);
    const std::size_t cols = read_be32(images, 12, images_path);
    const std::size_t label_count = read_be32(labels, 4, labels_path);
    require(rows > 0 && cols > 0, ErrorKind::format, images_path.string() + ": zero image dimension");

    const std::size_t pixels = rows * cols;
    require(images.size() == 16 + count * pixels, ErrorKind::length,
            images_path.string() + ": payload holds " + std::to_string(images.size() - 16) + " bytes, header promises " +
                std::to_string(count * pixels));
    require(labels.size() == 8 + label_count, ErrorKind::length,
            labels_path.string() + ": payload length does not match header count");
    require(count == label_count, ErrorKind::consistency,
            std::to_string(count) + " images but " + std::to_string(label_count) + " labels");
    require(count > 0, ErrorKind::format, "IDX files contain no samples");

    Dataset ds({1, rows, cols}, class_count, split);
    std::vector<float> x(pixels);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t p = 0; p < pixels; ++p)
            x[p] = static_cast<float>(static_cast<unsigned char>(images[16 + i * pixels + p])) / 255.0f;
        ds.add(x, static_cast<unsigned char>(labels[8 + i]));
    }
    return ds;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const Dataset& ds) {
    const Shape& s = ds.sample_shape();
    require(s.size() == 3 && s[0] == 1, ErrorKind::dimension, "write_idx expects [1, rows, cols] samples");
    std::string images, labels;
    put_be32(images, kImageMagic);
    put_be32(images, static_cast<std::uint32_t>(ds.size()));
    put_be32(images, static_cast<std::uint32_t>(s[1]));
    put_be32(images, static_cast<std::uint32_t>(s[2]));
    put_be32(labels, kLabelMagic);
    put_be32(labels, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (float v : ds.features(i)) images.push_back(static_cast<char>(std::lround(v * 255.0f)));
        labels.push_back(static_cast<char>(ds.label(i)));
    }
    for (auto [path, bytes] : {std::pair{&images_path, &images}, std::pair{&labels_path, &labels}}) {
        std::ofstream out(*path, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path->string());
        out.write(bytes->data(), static_cast<std::streamsize>(bytes->size()));
    }
}

Dataset synth_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim, float separation,
                    std::uint64_t seed) {
    require(class_count >= 2, ErrorKind::contract, "synth_blobs needs at least two classes");
    require(per_class >= 1, ErrorKind::contract, "synth_blobs needs per_class >= 1");
    require(separation > 0.0f, ErrorKind::contract, "synth_blobs needs positive separation");
    require(dim >= 1 && (dim >= 2 || class_count == 2), ErrorKind::contract,
            "synth_blobs with more than two classes needs dim >= 2");

    // Means on a circle in the first two coordinates with chord length = separation.
    std::vector<std::vector<double>> means(class_count, std::vector<double>(dim, 0.0));
    if (dim == 1) {
        means[1][0] = separation;
    } else {
        const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(class_count)));
        for (std::size_t c = 0; c < class_count; ++c) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(class_count);
            means[c][0] = radius * std::cos(angle);
            means[c][1] = radius * std::sin(angle);
        }
    }

    Rng rng = Rng(seed).split("blobs");
    std::vector<double> raw;
    std::vector<int> labels;
    for (std::size_t c = 0; c < class_count; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t k = 0; k < dim; ++k) raw.push_back(means[c][k] + rng.normal());
            labels.push_back(static_cast<int>(c));
        }
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it, span = std::max(*hi_it - *lo_it, 1e-12);

    Dataset ds({dim}, class_count, Split::train);
    std::vector<float> x(dim);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t k = 0; k < dim; ++k) x[k] = static_cast<float>((raw[i * dim + k] - lo) / span);
        ds.add(x, labels[i]);
    }
    return ds;
}

Dataset per_class_subset(const Dataset& ds, std::size_t per_class, std::uint64_t seed) {
    Rng rng = Rng(seed).split("per_class_subset");
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < ds.class_count(); ++c) {
        auto members = ds.indices_of_class(static_cast<int>(c));
        require(members.size() >= per_class, ErrorKind::budget,
                "class " + std::to_string(c) + " has " + std::to_string(members.size()) + " samples, need " +
                    std::to_string(per_class));
        Rng class_rng = rng.split(c);
        class_rng.shuffle(std::span<std::size_t>(members));
        members.resize(per_class);
        std::sort(members.begin(), members.end());
        chosen.insert(chosen.end(), members.begin(), members.end());
    }
    std::sort(chosen.begin(), chosen.end());
    return ds.subset(chosen);
}

Dataset downsample_to_8x8(const Dataset& ds) {
    const Shape& s = ds.sample_shape();
    require(s == Shape{1, 28, 28}, ErrorKind::dimension, "downsample_to_8x8 expects [1, 28, 28] samples");
    Dataset out({1, 8, 8}, ds.class_count(), ds.split());
    std::vector<float> padded(32 * 32), half(16 * 16), small(8 * 8);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto f = ds.features(i);
        std::fill(padded.begin(), padded.end(), 0.0f);
        for (std::size_t r = 0; r < 28; ++r)
            for (std::size_t c = 0; c < 28; ++c) padded[(r + 2) * 32 + c + 2] = f[r * 28 + c];
        auto pool = [](const std::vector<float>& src, std::size_t side, std::vector<float>& dst) {
            const std::size_t half_side = side / 2;
            for (std::size_t r = 0; r < half_side; ++r)
                for (std::size_t c = 0; c < half_side; ++c)
                    dst[r * half_side + c] = 0.25f * (src[(2 * r) * side + 2 * c] + src[(2 * r) * side + 2 * c + 1] +
                                                      src[(2 * r + 1) * side + 2 * c] +
                                                      src[(2 * r + 1) * side + 2 * c + 1]);
        };
        pool(padded, 32, half);
        pool(half, 16, small);
        out.add(small, ds.label(i));
    }
    return out;
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
        const auto first = s.find_first_not_of(" \t\r");
        if (first == std::string::npos) return std::string();
        const auto last = s.find_last_not_of(" \t\r");
        return s.substr(first, last - first + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorKind::configuration,
                "line " + std::to_string(line_no) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        require(!key.empty(), ErrorKind::configuration, "line " + std::to_string(line_no) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
    return parse_key_values(read_file(path));
}

void write_key_values(const std::filesystem::path& path, const std::map<std::string, std::string>& values) {
    std::ofstream out(path, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
    for (const auto& [k, v] : values) out << k << '=' << v << '\n';
}

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
    auto kv = read_key_values(path);
    DatasetManifest m;
    const auto base = path.parent_path();
    auto need = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        require(it != kv.end(), ErrorKind::configuration, path.string() + ": missing key '" + key + "'");
        return it->second;
    };
    m.images = base / need("images");
    m.labels = base / need("labels");
    m.split = parse_split(need("split"));
    m.class_count = std::stoul(need("class_count"));
    return m;
}

void DatasetManifest::write(const std::filesystem::path& path) const {
    write_key_values(path, {{"images", images.string()},
                            {"labels", labels.string()},
                            {"split", std::string(to_string(split))},
                            {"class_count", std::to_string(class_count)}});
}

Dataset DatasetManifest::load() const { return load_idx(images, labels, split, class_count); }

}  // namespace ladder
