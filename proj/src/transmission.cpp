#include "gtaseg/transmission.hpp"

#include "gtaseg/error.hpp"

namespace gtaseg {

void ema_update(ParamStore& target, const ParamStore& source, const EmaConfig& cfg) {
    if (cfg.alpha < 0.0f || cfg.alpha > 1.0f) throw ConfigError("ema_update: alpha outside [0,1]");
    if (target.size() != source.size()) {
        throw StructureError("ema_update: stores differ in entry count");
    }
    if (cfg.alpha == 1.0f) return;

    const double a = static_cast<double>(cfg.alpha);
    for (std::size_t i = 0; i < target.size(); ++i) {
        ParamEntry& t = target.entries()[i];
        const ParamEntry& s = source.entries()[i];
        if (t.name != s.name || t.role != s.role || !t.tensor.same_shape(s.tensor)) {
            throw StructureError("ema_update: entry mismatch at " + t.name + " vs " + s.name);
        }
        if (!in_scope(t.role, cfg.scope)) continue;
        float* tp = t.tensor.data();
        const float* sp = s.tensor.data();
        const std::int64_t n = t.tensor.size();
        if (cfg.alpha == 0.0f) {
            for (std::int64_t j = 0; j < n; ++j) tp[j] = sp[j];
            continue;
        }
        // Double intermediates keep each result inside [min, max] of the pair.
        for (std::int64_t j = 0; j < n; ++j) {
            tp[j] = static_cast<float>(a * static_cast<double>(tp[j]) +
                                       (1.0 - a) * static_cast<double>(sp[j]));
        }
    }
}

void transmit_representation(ParamStore& student, const ParamStore& gta, float alpha) {
    ema_update(student, gta, EmaConfig{alpha, Scope::Extractor});
}

void update_teacher(ParamStore& teacher, const ParamStore& student, float alpha) {
    ema_update(teacher, student, EmaConfig{alpha, Scope::All});
}

}  // namespace gtaseg
