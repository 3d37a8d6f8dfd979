#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gtaseg/aligned.hpp"
#include "gtaseg/error.hpp"

namespace gtaseg {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float32 n-d array in 64-byte-aligned storage. Values are
// plain data; all math that needs gradients goes through Graph ops.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<std::size_t>(numel(shape_)), 0.0f) {}

    Tensor(Shape shape, const std::vector<float>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (static_cast<std::int64_t>(data_.size()) != numel(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, float value);
    static Tensor scalar(float value) { return Tensor({1}, {value}); }

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    FloatBuffer& vec() { return data_; }
    const FloatBuffer& vec() const { return data_; }

    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    Shape shape_;
    FloatBuffer data_;
};

}  // namespace gtaseg
