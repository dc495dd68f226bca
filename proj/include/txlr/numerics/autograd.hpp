#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "txlr/numerics/tensor.hpp"

namespace txlr {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor<T>& grad_buffer() {
        if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
        return grad;
    }
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_->requires_grad; }

    bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->grad.empty(); }
    /// Gradient, or zeros when nothing has flowed into this node.
    Tensor<T> grad() const { return has_grad() ? node_->grad : Tensor<T>(node_->value.shape()); }
    void zero_grad() { node_->grad = Tensor<T>(); }

    T item() const {
        if (node_->value.size() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
        return node_->value[0];
    }

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    /// Builds an interior node. `backward` reads node.grad and accumulates into parents.
    static Var make(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> backward) {
        Var out(std::move(value));
        for (auto& p : parents) {
            if (p.requires_grad()) out.node_->requires_grad = true;
        }
        if (out.node_->requires_grad) {
            out.node_->parents.reserve(parents.size());
            for (auto& p : parents) out.node_->parents.push_back(p.node_);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
    return Var<T>(std::move(value), false);
}

template <typename T>
Var<T> leaf(Tensor<T> value) {
    return Var<T>(std::move(value), true);
}

/// Reverse sweep from a scalar root. Gradients accumulate into leaves, so
/// callers zero parameter gradients between steps.
template <typename T>
void backward(const Var<T>& root) {
    if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar, got " + shape_str(root.shape()));
    if (!root.requires_grad()) return;

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += T{1};
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward && node->grad.size() == node->value.size() && !node->grad.empty()) {
            node->backward(*node);
        }
    }
    // Interior nodes release their gradients so repeated backward calls on
    // overlapping graphs do not double-count.
    for (Node<T>* node : order) {
        if (node->backward) node->grad = Tensor<T>();
    }
}

}  // namespace txlr
