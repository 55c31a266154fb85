#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <utility>

#include "lrr/autodiff/tensor.hpp"

namespace lrr::ad {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Records executed operations so gradients can be propagated in exact reverse order.
/// Gradients accumulate additively; a node's grad buffer is allocated on first use.
template <class T>
class Tape {
public:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;
        bool requires_grad = false;
        std::function<void()> backward;
    };

    Var leaf(Tensor<T> value, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
        return Var{nodes_.size() - 1};
    }

    /// Registers an op result. `backward` is only kept when some input needs gradients.
    Var record(Tensor<T> value, bool requires_grad, std::function<void()> backward) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad,
                              requires_grad ? std::move(backward) : std::function<void()>{}});
        return Var{nodes_.size() - 1};
    }

    const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
    const Shape& shape(Var v) const { return nodes_.at(v.id).value.shape; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

    /// Gradient buffer of v, zero-initialised on first access.
    std::vector<T>& grad(Var v) {
        Node& n = nodes_.at(v.id);
        if (n.grad.empty()) n.grad.assign(n.value.data.size(), T{0});
        return n.grad;
    }
    bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

    /// Reverse pass from a scalar root, seeded with d(root)/d(root) = 1.
    void backward(Var root) {
        if (value(root).size() != 1) throw ShapeError("backward: root must be a scalar");
        backward(root, std::vector<T>{T{1}});
    }

    /// Reverse pass from any node with an explicit upstream gradient (vector-Jacobian product).
    void backward(Var root, const std::vector<T>& seed) {
        if (seed.size() != value(root).data.size())
            throw ShapeError("backward: seed length does not match the root");
        auto& g = grad(root);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward && !n.grad.empty()) n.backward();
        }
    }

    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;  // deque: references stay valid while recording
};

}  // namespace lrr::ad
