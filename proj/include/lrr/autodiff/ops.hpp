#pragma once

// Differentiable operators: exactly the set a 3D U-Net with instance norm needs.

#include <cmath>
#include <span>

#include "lrr/autodiff/kernels.hpp"
#include "lrr/autodiff/tape.hpp"

namespace lrr::ad {

using kernels::i64;

template <class T>
Var conv3d(Tape<T>& tape, Var x, Var w, Var b, std::array<i64, 3> stride = {1, 1, 1},
           std::array<i64, 3> pad = {0, 0, 0}) {
    const auto g = kernels::ConvGeom::make(tape.shape(x), tape.shape(w), stride, pad);
    if (tape.value(b).size() != g.cout) throw ShapeError("conv3d: bias length != Cout");
    Tensor<T> y({g.batch, g.cout, g.out[0], g.out[1], g.out[2]});
    kernels::conv3d_forward<T>(g, tape.value(x).data, tape.value(w).data, tape.value(b).data,
                               y.data);
    const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(b);
    Var out{tape.size()};
    return tape.record(std::move(y), rg, [&tape, g, x, w, b, out] {
        const auto& gy = tape.grad(out);
        std::span<T> gx, gw, gb;
        if (tape.requires_grad(x)) gx = tape.grad(x);
        if (tape.requires_grad(w)) gw = tape.grad(w);
        if (tape.requires_grad(b)) gb = tape.grad(b);
        kernels::conv3d_backward<T>(g, tape.value(x).data, tape.value(w).data, gy, gx, gw, gb);
    });
}

/// Fractionally strided convolution; w is [Cin, Cout, k, k, k].
template <class T>
Var transposed_conv3d(Tape<T>& tape, Var x, Var w, Var b, std::array<i64, 3> stride = {2, 2, 2}) {
    const auto g = kernels::TransposedGeom::make(tape.shape(x), tape.shape(w), stride);
    if (tape.value(b).size() != g.cout) throw ShapeError("transposed_conv3d: bias length != Cout");
    Tensor<T> y({g.batch, g.cout, g.out[0], g.out[1], g.out[2]});
    kernels::transposed_conv3d_forward<T>(g, tape.value(x).data, tape.value(w).data,
                                          tape.value(b).data, y.data);
    const bool rg = tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(b);
    Var out{tape.size()};
    return tape.record(std::move(y), rg, [&tape, g, x, w, b, out] {
        std::span<T> gx, gw, gb;
        if (tape.requires_grad(x)) gx = tape.grad(x);
        if (tape.requires_grad(w)) gw = tape.grad(w);
        if (tape.requires_grad(b)) gb = tape.grad(b);
        kernels::transposed_conv3d_backward<T>(g, tape.value(x).data, tape.value(w).data,
                                               tape.grad(out), gx, gw, gb);
    });
}

template <class T>
Var maxpool3d(Tape<T>& tape, Var x) {
    const Shape& s = tape.shape(x);
    if (s.size() != 5) throw ShapeError("maxpool3d expects a 5-D tensor");
    for (int a = 2; a < 5; ++a)
        if (s[a] % 2 != 0) throw ShapeError("maxpool3d: spatial extent not divisible by 2");
    Tensor<T> y({s[0], s[1], s[2] / 2, s[3] / 2, s[4] / 2});
    std::vector<i64> argmax(y.data.size());
    kernels::maxpool3d_forward<T>(s, tape.value(x).data, y.data, argmax);
    Var out{tape.size()};
    return tape.record(std::move(y), tape.requires_grad(x),
                       [&tape, x, out, argmax = std::move(argmax)] {
                           auto& gx = tape.grad(x);
                           const auto& gy = tape.grad(out);
                           for (std::size_t i = 0; i < argmax.size(); ++i)
                               gx[static_cast<std::size_t>(argmax[i])] += gy[i];
                       });
}

template <class T>
Var instance_norm3d(Tape<T>& tape, Var x, Var gamma, Var beta, T eps = T(1e-5)) {
    const Shape& s = tape.shape(x);
    if (s.size() != 5) throw ShapeError("instance_norm3d expects a 5-D tensor");
    const i64 B = s[0], C = s[1], S = s[2] * s[3] * s[4];
    if (S < 2) throw DegenerateInputError("instance_norm3d: spatial size must be >= 2");
    if (tape.value(gamma).size() != C || tape.value(beta).size() != C)
        throw ShapeError("instance_norm3d: gamma/beta length != C");
    Tensor<T> y(s);
    std::vector<T> xhat(y.data.size()), inv_std(static_cast<std::size_t>(B * C));
    kernels::instance_norm_forward<T>(B, C, S, tape.value(x).data, tape.value(gamma).data,
                                      tape.value(beta).data, eps, y.data, xhat, inv_std);
    const bool rg =
        tape.requires_grad(x) || tape.requires_grad(gamma) || tape.requires_grad(beta);
    Var out{tape.size()};
    return tape.record(std::move(y), rg,
                       [&tape, x, gamma, beta, out, B, C, S, xhat = std::move(xhat),
                        inv_std = std::move(inv_std)] {
                           std::span<T> gx, gg, gb;
                           if (tape.requires_grad(x)) gx = tape.grad(x);
                           if (tape.requires_grad(gamma)) gg = tape.grad(gamma);
                           if (tape.requires_grad(beta)) gb = tape.grad(beta);
                           kernels::instance_norm_backward<T>(B, C, S, tape.value(gamma).data,
                                                              xhat, inv_std, tape.grad(out), gx,
                                                              gg, gb);
                       });
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = xv.data[i] > T{0} ? xv.data[i] : T{0};
    Var out{tape.size()};
    return tape.record(std::move(y), tape.requires_grad(x), [&tape, x, out] {
        auto& gx = tape.grad(x);
        const auto& gy = tape.grad(out);
        const auto& xv = tape.value(x).data;
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (xv[i] > T{0}) gx[i] += gy[i];
    });
}

template <class T>
T sigmoid_scalar(T v) {
    if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
    const T e = std::exp(v);
    return e / (T{1} + e);
}

template <class T>
Var sigmoid(Tape<T>& tape, Var x) {
    const auto& xv = tape.value(x);
    Tensor<T> y(xv.shape);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = sigmoid_scalar(xv.data[i]);
    Var out{tape.size()};
    return tape.record(std::move(y), tape.requires_grad(x), [&tape, x, out] {
        auto& gx = tape.grad(x);
        const auto& gy = tape.grad(out);
        const auto& yv = tape.value(out).data;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * yv[i] * (T{1} - yv[i]);
    });
}

/// Concatenation along axis 1 of two [B, C, D, H, W] tensors with equal B and spatial extents.
template <class T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
    const Shape& sa = tape.shape(a);
    const Shape& sb = tape.shape(b);
    if (sa.size() != 5 || sb.size() != 5 || sa[0] != sb[0] || sa[2] != sb[2] ||
        sa[3] != sb[3] || sa[4] != sb[4])
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(sa) + " and " +
                         shape_str(sb));
    const i64 B = sa[0], Ca = sa[1], Cb = sb[1], S = sa[2] * sa[3] * sa[4];
    Tensor<T> y({B, Ca + Cb, sa[2], sa[3], sa[4]});
    const auto& av = tape.value(a).data;
    const auto& bv = tape.value(b).data;
    for (i64 n = 0; n < B; ++n) {
        std::copy_n(av.begin() + n * Ca * S, Ca * S, y.data.begin() + n * (Ca + Cb) * S);
        std::copy_n(bv.begin() + n * Cb * S, Cb * S, y.data.begin() + (n * (Ca + Cb) + Ca) * S);
    }
    const bool rg = tape.requires_grad(a) || tape.requires_grad(b);
    Var out{tape.size()};
    return tape.record(std::move(y), rg, [&tape, a, b, out, B, Ca, Cb, S] {
        const auto& gy = tape.grad(out);
        for (i64 n = 0; n < B; ++n) {
            if (tape.requires_grad(a)) {
                auto& ga = tape.grad(a);
                for (i64 i = 0; i < Ca * S; ++i) ga[n * Ca * S + i] += gy[n * (Ca + Cb) * S + i];
            }
            if (tape.requires_grad(b)) {
                auto& gb = tape.grad(b);
                for (i64 i = 0; i < Cb * S; ++i)
                    gb[n * Cb * S + i] += gy[(n * (Ca + Cb) + Ca) * S + i];
            }
        }
    });
}

/// Soft Dice loss 1 - (2*sum(p*t) + s) / (sum(p) + sum(t) + s), summed over every element.
template <class T>
Var dice_loss(Tape<T>& tape, Var p, Var t, T smooth = T(1e-5)) {
    if (tape.shape(p) != tape.shape(t))
        throw ShapeError("dice_loss: shape mismatch " + shape_str(tape.shape(p)) + " vs " +
                         shape_str(tape.shape(t)));
    const auto& pv = tape.value(p).data;
    const auto& tv = tape.value(t).data;
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        inter += static_cast<double>(pv[i]) * static_cast<double>(tv[i]);
        sp += static_cast<double>(pv[i]);
        st += static_cast<double>(tv[i]);
    }
    const double s = static_cast<double>(smooth);
    const double num = 2.0 * inter + s;
    const double den = sp + st + s;
    Tensor<T> y({1}, static_cast<T>(1.0 - num / den));
    Var out{tape.size()};
    return tape.record(std::move(y), tape.requires_grad(p), [&tape, p, t, out, num, den] {
        auto& gp = tape.grad(p);
        const double g = static_cast<double>(tape.grad(out)[0]);
        const auto& tv = tape.value(t).data;
        // dL/dp_i = -(2 t_i den - num) / den^2
        const double inv = 1.0 / (den * den);
        for (std::size_t i = 0; i < gp.size(); ++i)
            gp[i] += static_cast<T>(-g * (2.0 * static_cast<double>(tv[i]) * den - num) * inv);
    });
}

}  // namespace lrr::ad
