#pragma once

#include <stdexcept>
#include <string>

namespace gtaseg {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 2, NumericError -> 3, IoError/FormatError -> 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad magic / version / truncation in a persisted file.
struct FormatError : IoError {
    using IoError::IoError;
};

// Shape or channel-count mismatch between tensors.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parameter stores disagree on names, shapes or roles.
struct StructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. backward on a consumed tape.
struct UsageError : std::logic_error {
    using std::logic_error::logic_error;
};

// Caller broke a stated precondition.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Invalid input data: out-of-range class ids, empty sets.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace gtaseg
