#include "regdet/nn/graph.hpp"

#include <unordered_set>

namespace regdet::nn {

void backward(const Var& root) {
    require<NumericError>(root && root->value.size() == 1, "backward: root must be a scalar");
    if (!root->needs_grad) return;

    // Iterative post-order DFS over input edges.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->needs_grad && visited.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad = Tensor::full({1}, 1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->grad.defined()) node->backward_fn(*node);
    }
}

}  // namespace regdet::nn
