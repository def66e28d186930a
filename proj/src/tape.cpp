#include "dsgtf/tape.hpp"

namespace dsgtf {

const Tensor& Value::tensor() const { return tape->value(*this); }

Value Tape::leaf(Tensor value, bool requires_grad) {
    ensure_finite(value, "leaf");
    return emit(std::move(value), requires_grad, nullptr);
}

Value Tape::emit(Tensor value, bool requires_grad, BackpropFn fn) {
    const bool rg = recording_ && requires_grad;
    nodes_.push_back(Node{std::move(value), rg, rg ? std::move(fn) : nullptr});
    return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::check_owned(const Value& v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::logic_error("value does not belong to this tape");
}

const Tensor& Tape::value(const Value& v) const {
    check_owned(v);
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

bool Tape::requires_grad(const Value& v) const {
    check_owned(v);
    return nodes_[static_cast<std::size_t>(v.id)].requires_grad;
}

Tensor& Tape::grad_slot(std::int32_t id) {
    Tensor& slot = grads_[static_cast<std::size_t>(id)];
    if (slot.empty()) slot = Tensor::zeros(nodes_[static_cast<std::size_t>(id)].value.shape());
    return slot;
}

void Tape::backward(const Value& loss) {
    check_owned(loss);
    const Tensor& l = value(loss);
    if (l.size() != 1)
        throw ShapeError("backward: loss must be scalar, got " + l.shape_string());

    grads_.assign(nodes_.size(), Tensor{});
    grad_slot(loss.id)[0] = 1.0;

    for (std::int32_t id = loss.id; id >= 0; --id) {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (!grads_[static_cast<std::size_t>(id)].empty() && node.backprop) node.backprop(*this, id);
    }
}

const Tensor& Tape::grad(const Value& v) {
    check_owned(v);
    if (grads_.size() != nodes_.size())
        throw std::logic_error("grad queried before backward()");
    return grad_slot(v.id);  // zeros if untouched
}

}  // namespace dsgtf
