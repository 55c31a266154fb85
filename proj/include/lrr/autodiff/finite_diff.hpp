#pragma once

#include <functional>

#include "lrr/autodiff/tensor.hpp"

namespace lrr::ad {

/// Central-difference gradient of a scalar function, element by element, in 64-bit.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double h = 1e-5) {
    Tensor<double> g(x.shape);
    Tensor<double> probe = x;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        g.data[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace lrr::ad
