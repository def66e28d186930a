#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dsgtf/tensor.hpp"

namespace dsgtf {

class Tape;

// Handle to a node on a tape. Cheap to copy; invalidated when the tape dies.
struct Value {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool defined() const { return tape != nullptr && id >= 0; }
    const Tensor& tensor() const;
};

// Record of executed differentiable operations. Nodes are appended in
// execution order, which is a topological order by construction: an op can
// only reference values that already exist.
class Tape {
public:
    // Invoked during the reverse sweep with the node's own id; reads the
    // node's gradient via grad_at(id) and accumulates into its inputs' slots.
    using BackpropFn = std::function<void(Tape&, std::int32_t)>;

    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }
    std::size_t size() const { return nodes_.size(); }

    Value leaf(Tensor value, bool requires_grad = false);

    // Used by ops: append a computed node. `fn` may be null (no gradient path).
    Value emit(Tensor value, bool requires_grad, BackpropFn fn);

    const Tensor& value(const Value& v) const;
    bool requires_grad(const Value& v) const;

    // Reverse sweep from a scalar loss. Gradients of all nodes reachable from
    // the loss are accumulated; everything else reads back as zeros.
    void backward(const Value& loss);

    // Gradient of `v` after backward(); zeros if the loss never touched it.
    const Tensor& grad(const Value& v);

    // --- accumulation interface for backprop closures ---
    const Tensor& grad_at(std::int32_t id) const { return grads_[static_cast<std::size_t>(id)]; }
    // Zero-initialized slot matching the node's value shape.
    Tensor& grad_slot(std::int32_t id);

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        BackpropFn backprop;
    };

    void check_owned(const Value& v) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool recording_;
};

}  // namespace dsgtf
