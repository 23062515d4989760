#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ladder/tensor.hpp"

namespace ladder {

enum class Split { train, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct LabeledSample {
    std::vector<float> x;
    int y = 0;
};

/// Samples stored contiguously; every feature is clamped into [0, 1] on insert.
class Dataset {
   public:
    Dataset() = default;
    Dataset(Shape sample_shape, std::size_t class_count, Split split = Split::train);

    void add(std::span<const float> x, int y);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    const Shape& sample_shape() const noexcept { return sample_shape_; }
    std::size_t sample_size() const noexcept { return sample_size_; }
    std::size_t class_count() const noexcept { return class_count_; }
    Split split() const noexcept { return split_; }
    void set_split(Split split) { split_ = split; }

    std::span<const float> features(std::size_t i) const;
    int label(std::size_t i) const { return labels_.at(i); }
    std::span<const int> labels() const noexcept { return labels_; }
    LabeledSample at(std::size_t i) const;

    /// [B, sample_shape...] for the given rows.
    Tensor batch(std::span<const std::size_t> indices) const;
    Tensor all() const;
    std::vector<int> labels_of(std::span<const std::size_t> indices) const;

    Dataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_counts() const;
    std::vector<std::size_t> indices_of_class(int label) const;

   private:
    Shape sample_shape_;
    std::size_t sample_size_ = 0;
    std::size_t class_count_ = 0;
    Split split_ = Split::train;
    std::vector<float> features_;
    std::vector<int> labels_;
};

/// MNIST-style IDX pair. Pixels are scaled by 1/255; samples get shape [1, rows, cols].
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 Split split = Split::train, std::size_t class_count = 10);

/// Inverse of load_idx for image datasets of shape [1, rows, cols] (pixels rounded to bytes).
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const Dataset& ds);

/// Gaussian clusters (sigma = 1) with pairwise mean distance >= separation,
/// mapped by one affine transform into [0, 1]^dim.
Dataset synth_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim, float separation,
                    std::uint64_t seed);

/// Uniform selection without replacement of exactly per_class samples of each class.
Dataset per_class_subset(const Dataset& ds, std::size_t per_class, std::uint64_t seed);

/// 28x28 -> zero-pad to 32x32 -> two rounds of 2x2 average pooling -> 8x8.
Dataset downsample_to_8x8(const Dataset& ds);

/// Plain key=value text; '#' starts a comment line.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);
std::map<std::string, std::string> parse_key_values(std::string_view text);
void write_key_values(const std::filesystem::path& path, const std::map<std::string, std::string>& values);

struct DatasetManifest {
    std::filesystem::path images;
    std::filesystem::path labels;
    Split split = Split::train;
    std::size_t class_count = 10;

    static DatasetManifest read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;
    Dataset load() const;
};

}  // namespace ladder
