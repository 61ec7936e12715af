#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "percept_loop/core/tensor.hpp"

namespace percept_loop::ad {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backward;

    Tensor<T>& ensure_grad()
    {
        if (grad.empty() && !value.empty())
            grad = Tensor<T>(value.channels(), value.height(), value.width());
        return grad;
    }
};

/// Handle to a node of a dynamically built reverse-mode graph. Copies share
/// the node.
template <typename T>
class Var {
public:
    Var() = default;

    static Var constant(Tensor<T> value)
    {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        return Var(std::move(n));
    }

    static Var leaf(Tensor<T> value, bool requires_grad)
    {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        n->requires_grad = requires_grad;
        return Var(std::move(n));
    }

    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Tensor<T>& grad() const { return node_->grad; }
    Tensor<T>& grad() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool valid() const { return static_cast<bool>(node_); }
    T item() const { return node_->value.item(); }

    void zero_grad()
    {
        if (!node_->grad.empty())
            node_->grad.fill(T(0));
    }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

    /// Seeds d(self)/d(self) = 1 for a scalar output and propagates to every
    /// upstream node that requires gradients. Leaf gradients accumulate.
    void backward() const
    {
        if (node_->value.size() != 1)
            throw std::logic_error("Var::backward: output must be a scalar");
        if (!node_->requires_grad)
            return;
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        // Iterative post-order DFS; graphs can be deep.
        std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                Node<T>* p = n->parents[next++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        for (Node<T>* n : order)
            if (n->backward)
                n->ensure_grad().fill(T(0));
        node_->ensure_grad()[0] = T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward)
                (*it)->backward(**it);
    }

    /// Builds an interior node. The backward callback is only attached when
    /// some parent needs a gradient.
    static Var make(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                    std::function<void(Node<T>&)> backward)
    {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(value);
        for (const auto& p : parents)
            n->requires_grad = n->requires_grad || p->requires_grad;
        if (n->requires_grad) {
            n->parents = std::move(parents);
            n->backward = std::move(backward);
        }
        return Var(std::move(n));
    }

private:
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}
    std::shared_ptr<Node<T>> node_;
};

/// Accumulate into a parent's gradient only if it participates.
template <typename T>
inline Tensor<T>* grad_of(const std::shared_ptr<Node<T>>& p)
{
    return p->requires_grad ? &p->ensure_grad() : nullptr;
}

} // namespace percept_loop::ad
