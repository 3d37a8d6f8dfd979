#include "gtaseg/graph.hpp"

#include "gtaseg/error.hpp"

namespace gtaseg {

NodeId Graph::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor{}, {}, nullptr});
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::param(const std::string& name, const Tensor& value) {
    for (const auto& [n, id] : params_) {
        if (n == name) throw UsageError("duplicate parameter name on tape: " + name);
    }
    NodeId id = constant(value);
    params_.emplace_back(name, id);
    return id;
}

NodeId Graph::add_node(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
    if (!recording_) {
        nodes_.push_back(Node{std::move(value), Tensor{}, {}, nullptr});
    } else {
        nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs), std::move(backward)});
    }
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor Graph::grad(NodeId id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) return Tensor::zeros(n.value.shape());
    return n.grad;
}

Tensor& Graph::grad_buffer(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

std::map<std::string, Tensor> Graph::backward(NodeId loss) {
    if (!recording_) throw UsageError("backward on a non-recording graph");
    if (consumed_) throw UsageError("backward called twice on a consumed tape");
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size()) {
        throw UsageError("backward from unknown node");
    }
    if (nodes_[static_cast<std::size_t>(loss)].value.size() != 1) {
        throw UsageError("backward requires a scalar loss node");
    }
    consumed_ = true;

    // Mark ancestors of the loss; ids descend in topological order.
    std::vector<char> needed(nodes_.size(), 0);
    needed[static_cast<std::size_t>(loss)] = 1;
    for (NodeId id = loss; id >= 0; --id) {
        if (!needed[static_cast<std::size_t>(id)]) continue;
        for (NodeId in : nodes_[static_cast<std::size_t>(id)].inputs) {
            needed[static_cast<std::size_t>(in)] = 1;
        }
    }

    grad_buffer(loss)[0] = 1.0f;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (needed[static_cast<std::size_t>(id)] && n.backward) n.backward(*this, id);
    }

    std::map<std::string, Tensor> grads;
    for (const auto& [name, id] : params_) {
        grads.emplace(name, grad(id));
    }
    return grads;
}

}  // namespace gtaseg
