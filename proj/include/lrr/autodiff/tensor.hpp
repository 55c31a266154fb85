#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "lrr/error.hpp"

namespace lrr::ad {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

/// Dense row-major array (last axis fastest).
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T{})
        : shape(std::move(s)), data(static_cast<std::size_t>(numel(shape)), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<std::int64_t>(data.size()) != numel(shape))
            throw ShapeError("tensor data length does not match shape " + shape_str(shape));
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }
};

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
    return Tensor<To>(t.shape, std::vector<To>(t.data.begin(), t.data.end()));
}

}  // namespace lrr::ad
