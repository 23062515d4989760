#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "ladder/tensor.hpp"

namespace ladder {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
   public:
    Var() = default;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

   private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Result of Tape::backward. Looking up a leaf that did not participate in
/// the loss yields zeros of the leaf's shape.
class Gradients {
   public:
    const Tensor& operator[](const Var& v) const;

   private:
    friend class Tape;
    std::vector<Tensor> grads_;
    std::vector<Tensor> zeros_;
};

/// Receives the op's output value, the gradient flowing into it, and one slot
/// per input. A slot is null when that input does not require grad. Slots
/// must be accumulated into, never overwritten.
using BackwardFn = std::function<void(const Tensor& out_value, const Tensor& out_grad, std::span<Tensor* const> in_grads)>;

class Tape {
   public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Appends an op result. The backward closure is kept only when some
    /// input requires grad.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

    /// Single-use: a second call, or recording after it, throws a reuse error.
    Gradients backward(const Var& loss);

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t recorded_op_count() const noexcept { return recorded_ops_; }
    bool consumed() const noexcept { return consumed_; }

   private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        bool is_leaf = true;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    void check_live() const;

    std::deque<Node> nodes_;  // deque: Var::value() references survive later records
    std::size_t recorded_ops_ = 0;
    bool consumed_ = false;
};

inline const Tensor& Var::value() const {
    if (tape_ == nullptr) fail(ErrorKind::contract, "use of an unbound Var");
    return tape_->value(id_);
}

enum class OpKind {
    matmul,
    conv2d,
    conv1d,
    transpose_conv2d,
    add,
    mul,
    relu,
    tanh,
    sigmoid,
    softmax,
    mean_squared_error,
    cross_entropy_with_logits,
    hinge,
    l1,
    l2,
    reshape,
    max_pool,
};

struct OpParams {
    std::size_t axis = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t kernel = 2;
    Shape shape;
    std::vector<int> labels;
    std::vector<float> signs;
};

namespace ops {

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);
/// x: [B, N] (or [B, C, ...] with bias over axis 1), bias: [N] / [C].
Var add_bias(const Var& x, const Var& bias);

Var relu(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var softmax(const Var& x, std::size_t axis);

Var reshape(const Var& x, Shape shape);
Var sum(const Var& x);
Var mean(const Var& x);

/// Mean over all elements of (pred - target)^2.
Var mse_loss(const Var& pred, const Var& target);
/// Mean over all elements of |pred - target|.
Var mae_loss(const Var& pred, const Var& target);
/// Mean over the batch of softmax cross-entropy; logits [B, C].
Var cross_entropy(const Var& logits, std::span<const int> labels);
/// Mean over the batch of max(0, 1 - y * s); scores [B] or [B, 1], y in {-1, +1}.
Var hinge_loss(const Var& scores, std::span<const float> signs);
/// Sum of |x|.
Var l1(const Var& x);
/// Sum of x^2.
Var l2(const Var& x);
/// Mean over the batch of KL(softmax(p) || softmax(q)) with probabilities floored at 1e-12.
Var kl_divergence(const Var& p_logits, const Var& q_logits);

/// NCHW; weight [Co, Ci, k, k]; bias [Co] or invalid Var.
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride = 1, std::size_t padding = 0);
/// NCHW; weight [Ci, Co, k, k]; out = (in - 1) * stride - 2 * padding + k.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride, std::size_t padding = 0);
/// x [N, Ci, L]; weight [Co, Ci, k].
Var conv1d(const Var& x, const Var& weight, const Var& bias, std::size_t padding);
Var max_pool2d(const Var& x, std::size_t kernel, std::size_t stride);

}  // namespace ops

/// Dispatch by op kind. Inputs follow the argument order of the typed ops in
/// `ops`; labels/signs/shape/axis/stride/padding/kernel come from params.
Var forward_op(OpKind kind, std::span<const Var> inputs, const OpParams& params);

}  // namespace ladder
