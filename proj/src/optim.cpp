#include "gtaseg/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "gtaseg/error.hpp"

namespace gtaseg {

float poly_lr(int t, const SgdState& state) {
    if (t < 0 || t > state.total_iters) {
        throw std::out_of_range("poly_lr: t=" + std::to_string(t) + " outside [0, " +
                                std::to_string(state.total_iters) + "]");
    }
    if (t == 0) return state.lr_init;
    if (t == state.total_iters) return 0.0f;
    const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(state.total_iters);
    return static_cast<float>(static_cast<double>(state.lr_init) * std::pow(frac, static_cast<double>(state.power)));
}

void sgd_step(ParamStore& params, const std::map<std::string, Tensor>& grads, const SgdState& state,
              int t) {
    const float lr = poly_lr(t, state);
    if (lr == 0.0f) return;
    const float wd = state.weight_decay;
    for (auto& e : params.entries()) {
        auto it = grads.find(e.name);
        if (it == grads.end()) {
            throw StructureError("sgd_step: missing gradient for parameter " + e.name);
        }
        const Tensor& g = it->second;
        if (!g.same_shape(e.tensor)) {
            throw StructureError("sgd_step: gradient shape mismatch for " + e.name);
        }
        float* p = e.tensor.data();
        const float* gp = g.data();
        const std::int64_t n = e.tensor.size();
        for (std::int64_t i = 0; i < n; ++i) {
            p[i] -= lr * (gp[i] + wd * p[i]);
        }
    }
}

}  // namespace gtaseg
