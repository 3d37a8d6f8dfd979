#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gtaseg/tensor.hpp"

namespace gtaseg {

using NodeId = std::int32_t;

// Per-pixel label value meaning "excluded from the loss".
constexpr std::int32_t kIgnoreLabel = -1;

// Reverse-mode tape. Nodes are appended in forward order, so node creation
// order is a topological order; backward walks ids descending and visits each
// ancestor of the loss exactly once. One backward per graph.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, NodeId)>;

    explicit Graph(bool recording = true) : recording_(recording) {}

    NodeId constant(Tensor value);
    // Named leaf; its gradient is reported by backward(). Copies the value.
    NodeId param(const std::string& name, const Tensor& value);

    NodeId add_node(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);

    bool recording() const { return recording_; }
    std::size_t node_count() const { return nodes_.size(); }

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    Tensor& mutable_value(NodeId id) { return nodes_[static_cast<std::size_t>(id)].value; }

    // Gradient of `loss` w.r.t. the node; zeros when the node does not feed
    // the loss. Valid after backward().
    Tensor grad(NodeId id) const;

    // Accumulator used by op backward functions; allocated zeroed on first use.
    Tensor& grad_buffer(NodeId id);

    // Runs the tape backward from a scalar loss node and returns gradients
    // keyed by parameter name (zero tensors for parameters the loss never
    // touched). Throws UsageError on a second call or a non-scalar loss.
    std::map<std::string, Tensor> backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched
        std::vector<NodeId> inputs;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<std::string, NodeId>> params_;
    bool recording_ = true;
    bool consumed_ = false;
};

// --- primitive ops ---------------------------------------------------------

// Same-padding stride-1 convolution: [B,Cin,H,W] x [Cout,Cin,k,k] + [Cout]
// -> [B,Cout,H,W]. k must be odd.
NodeId conv2d(Graph& g, NodeId input, NodeId kernel, NodeId bias);

NodeId relu(Graph& g, NodeId x);

// Per-pixel softmax over the channel axis of [B,K,H,W], K >= 2.
NodeId softmax_channel(Graph& g, NodeId logits);

// Weighted pixel cross-entropy, fused with log-softmax:
//   sum_kept w * (-log softmax(logits)[label]) / max(1, n_kept)
// labels/weights have one entry per pixel (B*H*W); label kIgnoreLabel means
// excluded and its weight must be zero.
NodeId weighted_pixel_ce(Graph& g, NodeId logits, const std::vector<std::int32_t>& labels,
                         const std::vector<float>& weights);

// Full reduction to a scalar node.
NodeId sum(Graph& g, NodeId x);

// Weighted full reduction: sum_i coeffs[i] * x[i].
NodeId dot(Graph& g, NodeId x, const Tensor& coeffs);

NodeId add(Graph& g, NodeId a, NodeId b);

NodeId scale(Graph& g, NodeId x, float c);

}  // namespace gtaseg
