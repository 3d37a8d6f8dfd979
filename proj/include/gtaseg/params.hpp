#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtaseg/tensor.hpp"

namespace gtaseg {

// Which half of the network a parameter belongs to. Wire values (checkpoint
// role byte) are the enum values.
enum class Role : std::uint8_t { Extractor = 0, Predictor = 1 };

enum class Scope : std::uint8_t { All, Extractor, Predictor };

inline bool in_scope(Role role, Scope scope) {
    return scope == Scope::All || (scope == Scope::Extractor && role == Role::Extractor) ||
           (scope == Scope::Predictor && role == Role::Predictor);
}

struct ParamEntry {
    std::string name;
    Role role;
    int layer_index;
    Tensor tensor;
};

// Ordered, uniquely named parameter tensors with role tags. Order is the
// layer order and is preserved by clone and persistence.
class ParamStore {
public:
    void add(std::string name, Role role, int layer_index, Tensor tensor);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    // Entries whose role matches the scope, in store order.
    std::vector<const ParamEntry*> subset(Scope scope) const;

    ParamStore clone() const { return *this; }

    std::int64_t param_count() const;

private:
    std::vector<ParamEntry> entries_;
};

// Deep equality over names, roles, layer indices and tensor bits.
bool bit_identical(const ParamStore& a, const ParamStore& b, Scope scope = Scope::All);

}  // namespace gtaseg
