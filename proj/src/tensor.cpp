#include "ladder/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

namespace ladder {

std::size_t element_count(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace {

void check_shape(const Shape& shape) {
    require(!shape.empty(), ErrorKind::dimension, "tensor shape must have rank >= 1");
    for (std::size_t d : shape)
        require(d > 0, ErrorKind::dimension, "tensor dims must be positive, got " + shape_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(element_count(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    require(element_count(shape_) == data_.size(), ErrorKind::dimension,
            "shape " + shape_string(shape_) + " does not hold " + std::to_string(data_.size()) + " values");
}

Tensor Tensor::full(Shape shape, float value) {
    Tensor t(std::move(shape));
    for (float& v : t.data_) v = value;
    return t;
}

Tensor Tensor::vector(std::vector<float> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0f;
    return t;
}

float Tensor::item() const {
    require(data_.size() == 1, ErrorKind::dimension, "item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    require(element_count(shape) == data_.size(), ErrorKind::dimension,
            "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    // exponent all ones means inf or nan; a branch-free OR vectorises
    std::uint32_t bad = 0;
    for (float v : data_) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        bad |= static_cast<std::uint32_t>((bits & 0x7f800000u) == 0x7f800000u);
    }
    return bad == 0;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    require(begin < end && end <= shape_.at(0), ErrorKind::dimension, "row slice out of range");
    const std::size_t stride = data_.size() / shape_[0];
    Shape shape = shape_;
    shape[0] = end - begin;
    return Tensor(std::move(shape), std::vector<float>(data_.begin() + begin * stride, data_.begin() + end * stride));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    require(a.shape() == b.shape(), ErrorKind::dimension,
            std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::contract: return "contract";
        case ErrorKind::reuse: return "reuse";
        case ErrorKind::format: return "format";
        case ErrorKind::length: return "length";
        case ErrorKind::consistency: return "consistency";
        case ErrorKind::budget: return "budget";
        case ErrorKind::degeneracy: return "degeneracy";
        case ErrorKind::collapse: return "collapse";
        case ErrorKind::yield_shortfall: return "yield-shortfall";
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::usage: return "usage";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

}  // namespace ladder
