#pragma once

#include <cstdint>
#include <vector>

#include "gtaseg/graph.hpp"
#include "gtaseg/params.hpp"

namespace gtaseg {

// Stack of 3x3 conv+relu blocks at constant resolution, closed by a 1x1
// classification head. Blocks with layer_index < partition_boundary are the
// feature extractor; the head is always the mask predictor, so
// boundary == block count and boundary == layer count describe the same
// partition (head-only predictor, the default).
struct SegNetConfig {
    int in_channels = 3;
    std::vector<int> hidden = {16, 32, 32};
    int classes = 4;
    // -1 means "all conv blocks are extractor" (the default division).
    int partition_boundary = -1;

    int block_count() const { return static_cast<int>(hidden.size()); }
    int layer_count() const { return block_count() + 1; }
    int effective_boundary() const { return partition_boundary < 0 ? block_count() : partition_boundary; }
};

// Deterministic fan-in-scaled uniform init; biases start at zero. Role tags
// follow the configured boundary. Throws ConfigError on an invalid config.
ParamStore init_model(const SegNetConfig& config, std::uint64_t seed);

// Model parameters registered on a tape; lets one graph run several forward
// passes of the same model (e.g. labeled and unlabeled batches in one loss).
struct GraphModel {
    std::vector<std::pair<NodeId, NodeId>> blocks;  // (weight, bias) per conv block
    std::pair<NodeId, NodeId> head;
};

GraphModel register_model(Graph& g, const ParamStore& params);

NodeId model_forward(Graph& g, const GraphModel& model, const Tensor& images);

// Training-mode forward; registers every parameter on the tape under its
// store name. The architecture is recovered from the store itself.
NodeId forward_graph(Graph& g, const ParamStore& params, const Tensor& images);

// Inference forward (no tape kept).
Tensor forward(const ParamStore& params, const Tensor& images);

// Number of classes the stored head predicts.
int model_classes(const ParamStore& params);

}  // namespace gtaseg
