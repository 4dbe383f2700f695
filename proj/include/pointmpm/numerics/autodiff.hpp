#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pointmpm/numerics/tensor.hpp"

namespace pointmpm {

template <typename T>
struct Node;

/// Accumulates the vector-Jacobian product of one node into its parents'
/// gradient buffers. A null buffer means that parent does not need a gradient.
template <typename T>
using BackwardFn =
    std::function<void(const Node<T>& self, const Tensor<T>& grad, std::span<Tensor<T>* const> parent_grads)>;

template <typename T>
struct Node {
    Tensor<T> value;
    std::vector<std::shared_ptr<const Node<T>>> parents;
    BackwardFn<T> backward;
    bool requires_grad = false;
    const char* op = "leaf";
};

/// Handle to an immutable node in a computation graph. Graphs are built
/// eagerly: constructing an op computes its value immediately.
template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<const Node<T>> node) : node_(std::move(node)) {}

    const Tensor<T>& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<const Node<T>>& ptr() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<const Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->op = "constant";
    return Var<T>(std::move(n));
}

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var<T>(std::move(n));
}

/// Creates an op node. Checks that the forward value is finite.
template <typename T>
Var<T> make_op(const char* op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward) {
    if (!value.all_finite()) {
        throw NonFiniteError(std::string("non-finite value produced by op '") + op + "'");
    }
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->op = op;
    for (auto& in : inputs) {
        n->requires_grad = n->requires_grad || in.requires_grad();
        n->parents.push_back(in.ptr());
    }
    if (n->requires_grad) n->backward = std::move(backward);
    return Var<T>(std::move(n));
}

/// Reverse-mode sweep from a scalar root. Returns d(root)/d(w) for each
/// requested variable, zero-filled when w does not influence the root.
template <typename T>
std::vector<Tensor<T>> grad(const Var<T>& root, std::span<const Var<T>> wrt) {
    if (root.value().size() != 1) {
        throw ShapeError("gradient root must be a scalar, got shape " + shape_str(root.shape()));
    }

    std::vector<const Node<T>*> order;
    if (root.requires_grad()) {
        std::unordered_map<const Node<T>*, bool> visited;
        std::vector<std::pair<const Node<T>*, std::size_t>> stack{{root.node(), 0}};
        visited[root.node()] = true;
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                const Node<T>* p = node->parents[next++].get();
                if (p->requires_grad && !visited[p]) {
                    visited[p] = true;
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::unordered_map<const Node<T>*, Tensor<T>> grads;
    if (!order.empty()) grads[root.node()] = Tensor<T>(root.shape(), T(1));

    std::vector<Tensor<T>*> pg;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node<T>* node = *it;
        auto g = grads.find(node);
        if (g == grads.end() || !node->backward) continue;
        pg.assign(node->parents.size(), nullptr);
        for (std::size_t i = 0; i < node->parents.size(); ++i) {
            const Node<T>* p = node->parents[i].get();
            if (!p->requires_grad) continue;
            auto [slot, inserted] = grads.try_emplace(p);
            if (inserted) slot->second = Tensor<T>(p->value.shape(), T(0));
            pg[i] = &slot->second;
        }
        node->backward(*node, g->second, pg);
    }

    std::vector<Tensor<T>> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto g = grads.find(w.node());
        if (g == grads.end()) {
            out.emplace_back(w.shape(), T(0));
        } else {
            if (!g->second.all_finite()) throw NonFiniteError("non-finite gradient");
            out.push_back(g->second);
        }
    }
    return out;
}

} // namespace pointmpm
