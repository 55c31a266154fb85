#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lrr/autodiff/params.hpp"

namespace lrr::ad {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    std::int64_t step = 0;

    explicit AdamState(const ParamSet<T>& params) {
        for (const auto& t : params.tensors) {
            m.emplace_back(t.data.size(), T{0});
            v.emplace_back(t.data.size(), T{0});
        }
    }
};

/// One bias-corrected Adam update of every parameter.
template <class T>
void adam_step(ParamSet<T>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state,
               double lr, const AdamHyper& h = {}) {
    if (grads.size() != params.size() || state.m.size() != params.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& w = params.tensors[p].data;
        const auto& g = grads[p];
        auto& m = state.m[p];
        auto& v = state.v[p];
        if (g.size() != w.size() || m.size() != w.size())
            throw ShapeError("adam_step: shape mismatch for " + params.names[p]);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = h.beta1 * static_cast<double>(m[i]) + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * static_cast<double>(v[i]) + (1.0 - h.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps);
            w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
        }
    }
}

}  // namespace lrr::ad
