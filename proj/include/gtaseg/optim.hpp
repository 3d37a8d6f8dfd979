#pragma once

#include <map>
#include <string>

#include "gtaseg/params.hpp"
#include "gtaseg/tensor.hpp"

namespace gtaseg {

struct SgdState {
    float lr_init = 1e-3f;
    float weight_decay = 1e-4f;
    int total_iters = 1;
    float power = 0.9f;
};

// Poly schedule: lr_init * (1 - t/T)^power. Exact lr_init at t=0, exact 0 at
// t=T, non-increasing in between. Throws std::out_of_range outside [0, T].
float poly_lr(int t, const SgdState& state);

// theta := theta - lr(t) * (grad + weight_decay * theta), for every entry.
// A missing gradient key is an error, never a silent skip. lr(t) == 0 leaves
// the store bit-unchanged.
void sgd_step(ParamStore& params, const std::map<std::string, Tensor>& grads, const SgdState& state,
              int t);

}  // namespace gtaseg
