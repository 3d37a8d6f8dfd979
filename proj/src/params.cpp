#include "gtaseg/params.hpp"

#include <cstring>

#include "gtaseg/error.hpp"

namespace gtaseg {

void ParamStore::add(std::string name, Role role, int layer_index, Tensor tensor) {
    if (contains(name)) {
        throw StructureError("duplicate parameter name: " + name);
    }
    entries_.push_back(ParamEntry{std::move(name), role, layer_index, std::move(tensor)});
}

ParamEntry& ParamStore::at(const std::string& name) {
    for (auto& e : entries_) {
        if (e.name == name) return e;
    }
    throw StructureError("unknown parameter: " + name);
}

const ParamEntry& ParamStore::at(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e;
    }
    throw StructureError("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

std::vector<const ParamEntry*> ParamStore::subset(Scope scope) const {
    std::vector<const ParamEntry*> out;
    for (const auto& e : entries_) {
        if (in_scope(e.role, scope)) out.push_back(&e);
    }
    return out;
}

std::int64_t ParamStore::param_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
}

bool bit_identical(const ParamStore& a, const ParamStore& b, Scope scope) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const ParamEntry& ea = a.entries()[i];
        const ParamEntry& eb = b.entries()[i];
        if (ea.name != eb.name || ea.role != eb.role || ea.layer_index != eb.layer_index ||
            ea.tensor.shape() != eb.tensor.shape()) {
            return false;
        }
        if (!in_scope(ea.role, scope)) continue;
        if (std::memcmp(ea.tensor.data(), eb.tensor.data(),
                        sizeof(float) * static_cast<std::size_t>(ea.tensor.size())) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace gtaseg
