#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "regdet/nn/tensor.hpp"

namespace regdet::nn {

// One value in a per-sample computation graph. `backward_fn` reads this
// node's grad and accumulates into its inputs' grads; it captures raw node
// pointers only, so graphs stay acyclic and free when the root is released.
struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;
};

using Var = std::shared_ptr<Node>;

inline Var make_leaf(Tensor value, bool needs_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    return n;
}

inline Var constant(Tensor value) { return make_leaf(std::move(value), false); }

// Zero-initializes the node's grad buffer on first touch.
inline Tensor& ensure_grad(Node& n) {
    if (!n.grad.defined()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

// Reverse-mode sweep from a scalar root.
void backward(const Var& root);

// A named, trainable weight. The tensor is shared into per-sample graphs via
// Binder; gradients never live on the Param itself.
struct Param {
    std::string name;
    Tensor value;
};

// Binds Params into one graph, memoizing so a weight used twice is a single
// leaf. In inference mode leaves carry needs_grad = false and ops skip
// closure capture entirely.
class Binder {
public:
    explicit Binder(bool training = true) : training_(training) {}

    Var operator()(const Param& p) {
        auto it = bound_.find(&p);
        if (it != bound_.end()) return it->second;
        Var leaf = make_leaf(p.value, training_);
        bound_.emplace(&p, leaf);
        return leaf;
    }

    bool training() const { return training_; }

    // Adds this graph's parameter gradients into `acc` (keyed by Param).
    void add_grads_to(std::map<const Param*, Tensor>& acc) const {
        for (const auto& [param, leaf] : bound_) {
            if (!leaf->grad.defined()) continue;
            auto it = acc.find(param);
            if (it == acc.end())
                acc.emplace(param, leaf->grad.clone());
            else
                axpy(1.0f, leaf->grad, it->second);
        }
    }

private:
    bool training_;
    std::map<const Param*, Var> bound_;
};

}  // namespace regdet::nn
