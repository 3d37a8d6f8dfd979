#pragma once

#include "gtaseg/params.hpp"

namespace gtaseg {

struct EmaConfig {
    float alpha = 0.99f;
    Scope scope = Scope::All;
};

// In-scope parameters become alpha * target + (1 - alpha) * source; the rest
// are left bit-identical. alpha == 1 and alpha == 0 are exact no-op/copy.
// Stores must agree on names, shapes and roles.
void ema_update(ParamStore& target, const ParamStore& source, const EmaConfig& cfg);

// Extractor-scoped EMA from the assistant into the student; the student's
// predictor is untouched.
void transmit_representation(ParamStore& student, const ParamStore& gta, float alpha);

// Full-parameter EMA of the student into the teacher.
void update_teacher(ParamStore& teacher, const ParamStore& student, float alpha);

}  // namespace gtaseg
