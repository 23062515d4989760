#include "ladder/autodiff.hpp"

#include <algorithm>

namespace ladder {

bool Var::requires_grad() const { return tape_ != nullptr && tape_->requires_grad(id_); }

const Tensor& Gradients::operator[](const Var& v) const {
    require(v.id() < grads_.size(), ErrorKind::contract, "gradient lookup for a Var from another tape");
    if (!grads_[v.id()].empty()) return grads_[v.id()];
    return zeros_.at(v.id());
}

void Tape::check_live() const {
    require(!consumed_, ErrorKind::reuse, "tape already consumed by backward()");
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    check_live();
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    check_live();
    require(value.all_finite(), ErrorKind::numeric, "non-finite value produced by forward op");
    Node node;
    node.value = std::move(value);
    node.is_leaf = false;
    for (const Var& in : inputs) {
        if (!in.valid()) continue;
        require(&in.tape() == this, ErrorKind::contract, "op mixes Vars from different tapes");
        // op outputs were checked when recorded; leaves were not
        if (nodes_[in.id()].is_leaf)
            require(nodes_[in.id()].value.all_finite(), ErrorKind::numeric, "non-finite input to forward op");
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) {
        for (const Var& in : inputs) node.inputs.push_back(in.valid() ? in.id() : SIZE_MAX);
        node.backward = std::move(backward);
        ++recorded_ops_;
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
    check_live();
    require(loss.valid() && &loss.tape() == this, ErrorKind::contract, "loss was not produced on this tape");
    require(loss.value().size() == 1, ErrorKind::contract,
            "backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    consumed_ = true;

    Gradients out;
    out.grads_.resize(nodes_.size());
    out.zeros_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].is_leaf && nodes_[i].requires_grad) out.zeros_[i] = Tensor::zeros(nodes_[i].value.shape());

    auto& grads = out.grads_;
    grads[loss.id()] = Tensor::full(loss.shape(), 1.0f);

    std::vector<Tensor*> slots;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (node.is_leaf || !node.requires_grad || grads[id].empty()) continue;
        slots.assign(node.inputs.size(), nullptr);
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const std::size_t in = node.inputs[k];
            if (in == SIZE_MAX || !nodes_[in].requires_grad) continue;
            if (grads[in].empty()) grads[in] = Tensor::zeros(nodes_[in].value.shape());
            slots[k] = &grads[in];
        }
        node.backward(node.value, grads[id], slots);
        // Interior gradients are not observable; free them as we go.
        if (id != loss.id()) grads[id] = Tensor();
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!nodes_[i].is_leaf) grads[i] = Tensor();
    return out;
}

}  // namespace ladder
