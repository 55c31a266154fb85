#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrr/autodiff/tensor.hpp"

namespace lrr::ad {

/// Named trainable tensors in declaration order.
template <class T>
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor<T>> tensors;

    std::size_t add(std::string name, Tensor<T> t) {
        names.push_back(std::move(name));
        tensors.push_back(std::move(t));
        return tensors.size() - 1;
    }

    std::size_t size() const { return tensors.size(); }

    std::int64_t element_count() const {
        std::int64_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw ValidationError("no parameter named '" + name + "'");
    }
};

template <class To, class From>
ParamSet<To> param_cast(const ParamSet<From>& p) {
    ParamSet<To> out;
    for (std::size_t i = 0; i < p.size(); ++i) out.add(p.names[i], tensor_cast<To>(p.tensors[i]));
    return out;
}

}  // namespace lrr::ad
