#include "gtaseg/tensor.hpp"

#include <cmath>

namespace gtaseg {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw DimensionError("non-positive dimension in shape " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::full(Shape shape, float value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

bool Tensor::all_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace gtaseg
