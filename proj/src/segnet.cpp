#include "gtaseg/segnet.hpp"

#include <cmath>

#include "gtaseg/error.hpp"
#include "gtaseg/rng.hpp"

namespace gtaseg {

namespace {

Tensor uniform_tensor(Shape shape, float bound, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

ParamStore init_model(const SegNetConfig& config, std::uint64_t seed) {
    if (config.classes < 2) throw ConfigError("segnet: classes must be >= 2");
    if (config.in_channels < 1) throw ConfigError("segnet: in_channels must be >= 1");
    if (config.hidden.empty()) throw ConfigError("segnet: at least one conv block required");
    const int boundary = config.effective_boundary();
    if (boundary < 1 || boundary > config.layer_count()) {
        throw ConfigError("segnet: partition_boundary " + std::to_string(boundary) + " outside [1, " +
                          std::to_string(config.layer_count()) + "]");
    }

    Rng rng(mix_seed(seed, 0x5e6e37ULL));
    ParamStore store;
    int cin = config.in_channels;
    for (int i = 0; i < config.block_count(); ++i) {
        const int cout = config.hidden[static_cast<std::size_t>(i)];
        if (cout < 1) throw ConfigError("segnet: hidden width must be >= 1");
        const Role role = i < boundary ? Role::Extractor : Role::Predictor;
        const float bound = 1.0f / std::sqrt(static_cast<float>(cin * 9));
        const std::string prefix = "conv" + std::to_string(i);
        store.add(prefix + ".weight", role, i, uniform_tensor({cout, cin, 3, 3}, bound, rng));
        store.add(prefix + ".bias", role, i, Tensor::zeros({cout}));
        cin = cout;
    }
    // The 1x1 head is the mask predictor under every legal boundary.
    store.add("head.weight", Role::Predictor, config.block_count(),
              uniform_tensor({config.classes, cin, 1, 1}, 1.0f / std::sqrt(static_cast<float>(cin)), rng));
    store.add("head.bias", Role::Predictor, config.block_count(), Tensor::zeros({config.classes}));
    return store;
}

GraphModel register_model(Graph& g, const ParamStore& params) {
    const auto& entries = params.entries();
    if (entries.size() < 4 || entries.size() % 2 != 0) {
        throw StructureError("segnet store must hold (weight, bias) pairs plus a head");
    }
    GraphModel model;
    const std::size_t blocks = entries.size() / 2 - 1;
    for (std::size_t i = 0; i < blocks; ++i) {
        model.blocks.emplace_back(g.param(entries[2 * i].name, entries[2 * i].tensor),
                                  g.param(entries[2 * i + 1].name, entries[2 * i + 1].tensor));
    }
    model.head = {g.param(entries[2 * blocks].name, entries[2 * blocks].tensor),
                  g.param(entries[2 * blocks + 1].name, entries[2 * blocks + 1].tensor)};
    return model;
}

NodeId model_forward(Graph& g, const GraphModel& model, const Tensor& images) {
    if (images.ndim() != 4) throw DimensionError("segnet forward expects images [B,C,H,W]");
    NodeId x = g.constant(images);
    for (const auto& [w, b] : model.blocks) {
        x = relu(g, conv2d(g, x, w, b));
    }
    return conv2d(g, x, model.head.first, model.head.second);
}

NodeId forward_graph(Graph& g, const ParamStore& params, const Tensor& images) {
    return model_forward(g, register_model(g, params), images);
}

Tensor forward(const ParamStore& params, const Tensor& images) {
    Graph g(/*recording=*/false);
    return g.value(forward_graph(g, params, images));
}

int model_classes(const ParamStore& params) {
    const auto& entries = params.entries();
    if (entries.size() < 2) throw StructureError("empty parameter store");
    return entries[entries.size() - 2].tensor.dim(0);
}

}  // namespace gtaseg
