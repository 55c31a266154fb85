#pragma once

// Raw forward/backward kernels over NCDHW buffers. Every kernel here is deterministic:
// each output element is accumulated in a fixed order independent of blocking, which is
// what lets the blocked convolution match the naive loop bit for bit.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lrr/autodiff/tensor.hpp"

namespace lrr::ad::kernels {

using i64 = std::int64_t;

// ---------------------------------------------------------------------------
// GEMM: C[M,N] += A[M,K] * B[K,N], strided row-major operands.
// Per element, products are added to the existing C value in ascending k.

namespace detail {

// Register tile: up to kMr rows of C by two vectors. GCC vector extensions lower to
// whatever SIMD width the target has; lanes never mix, so rounding matches scalar code.
inline constexpr int kMr = 8;
inline constexpr int kVecBytes = 64;

template <class T>
struct Tile {
    typedef T vec __attribute__((vector_size(kVecBytes)));
    static constexpr int lanes = kVecBytes / static_cast<int>(sizeof(T));
    static constexpr int cols = 2 * lanes;
};

template <int R, class T>
inline void micro_tile(i64 K, const T* A, i64 lda, const T* B, i64 ldb, T* C, i64 ldc) {
    using V = typename Tile<T>::vec;
    constexpr int L = Tile<T>::lanes;
    V acc0[R], acc1[R];
    for (int r = 0; r < R; ++r) {
        __builtin_memcpy(&acc0[r], C + r * ldc, sizeof(V));
        __builtin_memcpy(&acc1[r], C + r * ldc + L, sizeof(V));
    }
    for (i64 k = 0; k < K; ++k) {
        V b0, b1;
        __builtin_memcpy(&b0, B + k * ldb, sizeof(V));
        __builtin_memcpy(&b1, B + k * ldb + L, sizeof(V));
        for (int r = 0; r < R; ++r) {
            const T a = A[r * lda + k];
            acc0[r] = acc0[r] + a * b0;
            acc1[r] = acc1[r] + a * b1;
        }
    }
    for (int r = 0; r < R; ++r) {
        __builtin_memcpy(C + r * ldc, &acc0[r], sizeof(V));
        __builtin_memcpy(C + r * ldc + L, &acc1[r], sizeof(V));
    }
}

template <class T>
inline void micro_rows(i64 rows, i64 K, const T* A, i64 lda, const T* B, i64 ldb, T* C, i64 ldc) {
    switch (rows) {
        case 8: micro_tile<8>(K, A, lda, B, ldb, C, ldc); break;
        case 7: micro_tile<7>(K, A, lda, B, ldb, C, ldc); break;
        case 6: micro_tile<6>(K, A, lda, B, ldb, C, ldc); break;
        case 5: micro_tile<5>(K, A, lda, B, ldb, C, ldc); break;
        case 4: micro_tile<4>(K, A, lda, B, ldb, C, ldc); break;
        case 3: micro_tile<3>(K, A, lda, B, ldb, C, ldc); break;
        case 2: micro_tile<2>(K, A, lda, B, ldb, C, ldc); break;
        default: micro_tile<1>(K, A, lda, B, ldb, C, ldc); break;
    }
}

template <class T>
inline void edge_tile(i64 rows, i64 cols, i64 K, const T* A, i64 lda, const T* B, i64 ldb, T* C,
                      i64 ldc) {
    for (i64 r = 0; r < rows; ++r)
        for (i64 c = 0; c < cols; ++c) {
            T acc = C[r * ldc + c];
            for (i64 k = 0; k < K; ++k) acc = acc + A[r * lda + k] * B[k * ldb + c];
            C[r * ldc + c] = acc;
        }
}

}  // namespace detail

template <class T>
void gemm_acc(i64 M, i64 N, i64 K, const T* A, i64 lda, const T* B, i64 ldb, T* C, i64 ldc) {
    using detail::kMr;
    constexpr i64 kNr = detail::Tile<T>::cols;
    const i64 n_full = N - N % kNr;
    for (i64 m = 0; m < M; m += kMr) {
        const i64 rows = std::min<i64>(kMr, M - m);
        for (i64 n = 0; n < n_full; n += kNr)
            detail::micro_rows(rows, K, A + m * lda, lda, B + n, ldb, C + m * ldc + n, ldc);
        if (n_full < N)
            detail::edge_tile(rows, N - n_full, K, A + m * lda, lda, B + n_full, ldb,
                              C + m * ldc + n_full, ldc);
    }
}

// ---------------------------------------------------------------------------
// 3D convolution (cross-correlation, no kernel flip).

struct ConvGeom {
    i64 batch = 1, cin = 1, cout = 1;
    std::array<i64, 3> in{1, 1, 1};      // D, H, W
    std::array<i64, 3> kernel{1, 1, 1};  // kd, kh, kw
    std::array<i64, 3> stride{1, 1, 1};
    std::array<i64, 3> pad{0, 0, 0};
    std::array<i64, 3> out{1, 1, 1};

    i64 in_spatial() const { return in[0] * in[1] * in[2]; }
    i64 out_spatial() const { return out[0] * out[1] * out[2]; }
    i64 patch() const { return cin * kernel[0] * kernel[1] * kernel[2]; }

    static ConvGeom make(const Shape& x, const Shape& w, std::array<i64, 3> stride,
                         std::array<i64, 3> pad) {
        if (x.size() != 5 || w.size() != 5)
            throw ShapeError("conv3d expects 5-D input and weight, got " + shape_str(x) + " and " +
                             shape_str(w));
        if (w[1] != x[1])
            throw ShapeError("conv3d channel mismatch: input " + shape_str(x) + ", weight " +
                             shape_str(w));
        ConvGeom g;
        g.batch = x[0];
        g.cin = x[1];
        g.cout = w[0];
        for (int a = 0; a < 3; ++a) {
            g.in[a] = x[2 + a];
            g.kernel[a] = w[2 + a];
            g.stride[a] = stride[a];
            g.pad[a] = pad[a];
            if (stride[a] < 1 || pad[a] < 0) throw ShapeError("conv3d: stride >= 1, pad >= 0");
            const i64 span = g.in[a] + 2 * pad[a] - g.kernel[a];
            if (span < 0) throw ShapeError("conv3d: kernel larger than padded input");
            if (span % stride[a] != 0)
                throw ShapeError("conv3d: output extent is not an exact division");
            g.out[a] = span / stride[a] + 1;
        }
        return g;
    }
};

/// Reference convolution: nested loops over every tap, zero-padded reads included.
template <class T>
void conv3d_forward_naive(const ConvGeom& g, std::span<const T> x, std::span<const T> w,
                          std::span<const T> bias, std::span<T> y) {
    const auto [D, H, W] = g.in;
    const auto [kd, kh, kw] = g.kernel;
    for (i64 b = 0; b < g.batch; ++b)
        for (i64 co = 0; co < g.cout; ++co)
            for (i64 oz = 0; oz < g.out[0]; ++oz)
                for (i64 oy = 0; oy < g.out[1]; ++oy)
                    for (i64 ox = 0; ox < g.out[2]; ++ox) {
                        T acc = bias.empty() ? T{0} : bias[co];
                        for (i64 ci = 0; ci < g.cin; ++ci)
                            for (i64 a = 0; a < kd; ++a)
                                for (i64 c = 0; c < kh; ++c)
                                    for (i64 e = 0; e < kw; ++e) {
                                        const i64 iz = oz * g.stride[0] - g.pad[0] + a;
                                        const i64 iy = oy * g.stride[1] - g.pad[1] + c;
                                        const i64 ix = ox * g.stride[2] - g.pad[2] + e;
                                        T v{0};
                                        if (iz >= 0 && iz < D && iy >= 0 && iy < H && ix >= 0 &&
                                            ix < W)
                                            v = x[(((b * g.cin + ci) * D + iz) * H + iy) * W + ix];
                                        acc = acc + v * w[(((co * g.cin + ci) * kd + a) * kh + c) *
                                                              kw +
                                                          e];
                                    }
                        y[(((b * g.cout + co) * g.out[0] + oz) * g.out[1] + oy) * g.out[2] + ox] =
                            acc;
                    }
}

namespace detail {

// Output rows (oz, oy pairs) per im2col chunk; keeps the column buffer cache-sized.
inline i64 rows_per_chunk(const ConvGeom& g) {
    const i64 target = std::max<i64>(1, (i64{1} << 16) / std::max<i64>(1, g.patch()));
    return std::clamp<i64>(target / std::max<i64>(1, g.out[2]), 1, g.out[0] * g.out[1]);
}

// col[K, n] for output rows [row0, row1) of batch item b; n runs over those rows' voxels.
template <class T>
void im2col(const ConvGeom& g, const T* xb, i64 row0, i64 row1, T* col) {
    const auto [D, H, W] = g.in;
    const auto [kd, kh, kw] = g.kernel;
    const i64 Wo = g.out[2];
    const i64 ncols = (row1 - row0) * Wo;
    i64 krow = 0;
    for (i64 ci = 0; ci < g.cin; ++ci)
        for (i64 a = 0; a < kd; ++a)
            for (i64 c = 0; c < kh; ++c)
                for (i64 e = 0; e < kw; ++e, ++krow) {
                    T* dst = col + krow * ncols;
                    for (i64 row = row0; row < row1; ++row) {
                        const i64 oz = row / g.out[1];
                        const i64 oy = row % g.out[1];
                        const i64 iz = oz * g.stride[0] - g.pad[0] + a;
                        const i64 iy = oy * g.stride[1] - g.pad[1] + c;
                        T* d = dst + (row - row0) * Wo;
                        if (iz < 0 || iz >= D || iy < 0 || iy >= H) {
                            std::fill(d, d + Wo, T{0});
                            continue;
                        }
                        const T* src = xb + ((ci * D + iz) * H + iy) * W;
                        if (g.stride[2] == 1) {
                            const i64 off = e - g.pad[2];
                            const i64 lo = std::clamp<i64>(-off, 0, Wo);
                            const i64 hi = std::clamp<i64>(W - off, lo, Wo);
                            std::fill(d, d + lo, T{0});
                            std::copy(src + lo + off, src + hi + off, d + lo);
                            std::fill(d + hi, d + Wo, T{0});
                        } else {
                            for (i64 ox = 0; ox < Wo; ++ox) {
                                const i64 ix = ox * g.stride[2] - g.pad[2] + e;
                                d[ox] = (ix >= 0 && ix < W) ? src[ix] : T{0};
                            }
                        }
                    }
                }
}

// Scatter-add of col gradients back onto the input gradient.
template <class T>
void col2im_add(const ConvGeom& g, const T* col, i64 row0, i64 row1, T* gxb) {
    const auto [D, H, W] = g.in;
    const auto [kd, kh, kw] = g.kernel;
    const i64 Wo = g.out[2];
    const i64 ncols = (row1 - row0) * Wo;
    i64 krow = 0;
    for (i64 ci = 0; ci < g.cin; ++ci)
        for (i64 a = 0; a < kd; ++a)
            for (i64 c = 0; c < kh; ++c)
                for (i64 e = 0; e < kw; ++e, ++krow) {
                    const T* src = col + krow * ncols;
                    for (i64 row = row0; row < row1; ++row) {
                        const i64 oz = row / g.out[1];
                        const i64 oy = row % g.out[1];
                        const i64 iz = oz * g.stride[0] - g.pad[0] + a;
                        const i64 iy = oy * g.stride[1] - g.pad[1] + c;
                        if (iz < 0 || iz >= D || iy < 0 || iy >= H) continue;
                        T* dst = gxb + ((ci * D + iz) * H + iy) * W;
                        const T* s = src + (row - row0) * Wo;
                        if (g.stride[2] == 1) {
                            const i64 off = e - g.pad[2];
                            const i64 lo = std::max<i64>(0, -off);
                            const i64 hi = std::min<i64>(Wo, W - off);
                            T* d = dst + off;
                            for (i64 ox = lo; ox < hi; ++ox) d[ox] += s[ox];
                        } else {
                            for (i64 ox = 0; ox < Wo; ++ox) {
                                const i64 ix = ox * g.stride[2] - g.pad[2] + e;
                                if (ix >= 0 && ix < W) dst[ix] += s[ox];
                            }
                        }
                    }
                }
}

}  // namespace detail

/// Blocked convolution: im2col over chunks of output rows followed by a register-tiled GEMM.
template <class T>
void conv3d_forward(const ConvGeom& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
    const i64 K = g.patch();
    const i64 S = g.out_spatial();
    const i64 rows = g.out[0] * g.out[1];
    const i64 chunk = detail::rows_per_chunk(g);
    std::vector<T> col(static_cast<std::size_t>(K * chunk * g.out[2]));
    for (i64 b = 0; b < g.batch; ++b) {
        const T* xb = x.data() + b * g.cin * g.in_spatial();
        T* yb = y.data() + b * g.cout * S;
        for (i64 co = 0; co < g.cout; ++co)
            std::fill(yb + co * S, yb + (co + 1) * S, bias.empty() ? T{0} : bias[co]);
        for (i64 r0 = 0; r0 < rows; r0 += chunk) {
            const i64 r1 = std::min(rows, r0 + chunk);
            const i64 n = (r1 - r0) * g.out[2];
            detail::im2col(g, xb, r0, r1, col.data());
            gemm_acc<T>(g.cout, n, K, w.data(), K, col.data(), n, yb + r0 * g.out[2], S);
        }
    }
}

/// Accumulates input, weight and bias gradients. Any of gx / gw / gb may be empty.
template <class T>
void conv3d_backward(const ConvGeom& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> gy, std::span<T> gx, std::span<T> gw, std::span<T> gb) {
    const i64 K = g.patch();
    const i64 S = g.out_spatial();
    const i64 rows = g.out[0] * g.out[1];
    const i64 chunk = detail::rows_per_chunk(g);
    const i64 max_n = chunk * g.out[2];

    if (!gb.empty())
        for (i64 b = 0; b < g.batch; ++b)
            for (i64 co = 0; co < g.cout; ++co) {
                const T* src = gy.data() + (b * g.cout + co) * S;
                T s{0};
                for (i64 i = 0; i < S; ++i) s += src[i];
                gb[co] += s;
            }
    if (gx.empty() && gw.empty()) return;

    std::vector<T> wt;  // [K, Cout]
    if (!gx.empty()) {
        wt.resize(static_cast<std::size_t>(K * g.cout));
        for (i64 co = 0; co < g.cout; ++co)
            for (i64 k = 0; k < K; ++k) wt[k * g.cout + co] = w[co * K + k];
    }
    std::vector<T> col(static_cast<std::size_t>(K * max_n));
    std::vector<T> colt(gw.empty() ? 0 : static_cast<std::size_t>(K * max_n));
    std::vector<T> gcol(gx.empty() ? 0 : static_cast<std::size_t>(K * max_n));

    for (i64 b = 0; b < g.batch; ++b) {
        const T* xb = x.data() + b * g.cin * g.in_spatial();
        const T* gyb = gy.data() + b * g.cout * S;
        for (i64 r0 = 0; r0 < rows; r0 += chunk) {
            const i64 r1 = std::min(rows, r0 + chunk);
            const i64 n = (r1 - r0) * g.out[2];
            const T* gy_chunk = gyb + r0 * g.out[2];
            if (!gw.empty()) {
                detail::im2col(g, xb, r0, r1, col.data());
                for (i64 k = 0; k < K; ++k)
                    for (i64 j = 0; j < n; ++j) colt[j * K + k] = col[k * n + j];
                // gW[Cout, K] += gy[Cout, n] * col^T[n, K]
                gemm_acc<T>(g.cout, K, n, gy_chunk, S, colt.data(), K, gw.data(), K);
            }
            if (!gx.empty()) {
                std::fill(gcol.begin(), gcol.begin() + K * n, T{0});
                // gcol[K, n] = W^T[K, Cout] * gy[Cout, n]
                gemm_acc<T>(K, n, g.cout, wt.data(), g.cout, gy_chunk, S, gcol.data(), n);
                detail::col2im_add(g, gcol.data(), r0, r1, gx.data() + b * g.cin * g.in_spatial());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Transposed convolution (no padding): the exact adjoint of conv3d with the same kernel.
// x [B, Cin, D, H, W], w [Cin, Cout, kd, kh, kw], y [B, Cout, (D-1)s+kd, ...].

struct TransposedGeom {
    i64 batch = 1, cin = 1, cout = 1;
    std::array<i64, 3> in{1, 1, 1}, kernel{2, 2, 2}, stride{2, 2, 2}, out{2, 2, 2};

    static TransposedGeom make(const Shape& x, const Shape& w, std::array<i64, 3> stride) {
        if (x.size() != 5 || w.size() != 5)
            throw ShapeError("transposed_conv3d expects 5-D input and weight");
        if (w[0] != x[1])
            throw ShapeError("transposed_conv3d channel mismatch: input " + shape_str(x) +
                             ", weight " + shape_str(w));
        TransposedGeom g;
        g.batch = x[0];
        g.cin = x[1];
        g.cout = w[1];
        for (int a = 0; a < 3; ++a) {
            if (stride[a] < 1) throw ShapeError("transposed_conv3d: stride >= 1");
            g.in[a] = x[2 + a];
            g.kernel[a] = w[2 + a];
            g.stride[a] = stride[a];
            g.out[a] = (g.in[a] - 1) * stride[a] + g.kernel[a];
        }
        return g;
    }
};

template <class T>
void transposed_conv3d_forward(const TransposedGeom& g, std::span<const T> x,
                               std::span<const T> w, std::span<const T> bias, std::span<T> y) {
    const auto [D, H, W] = g.in;
    const auto [kd, kh, kw] = g.kernel;
    const auto [Do, Ho, Wo] = g.out;
    const i64 kvol = kd * kh * kw;
    for (i64 b = 0; b < g.batch; ++b) {
        T* yb = y.data() + b * g.cout * Do * Ho * Wo;
        for (i64 co = 0; co < g.cout; ++co)
            std::fill(yb + co * Do * Ho * Wo, yb + (co + 1) * Do * Ho * Wo,
                      bias.empty() ? T{0} : bias[co]);
        for (i64 co = 0; co < g.cout; ++co)
            for (i64 ci = 0; ci < g.cin; ++ci) {
                const T* xc = x.data() + (b * g.cin + ci) * D * H * W;
                const T* wk = w.data() + (ci * g.cout + co) * kvol;
                T* yc = yb + co * Do * Ho * Wo;
                for (i64 a = 0; a < kd; ++a)
                    for (i64 c = 0; c < kh; ++c)
                        for (i64 e = 0; e < kw; ++e) {
                            const T wv = wk[(a * kh + c) * kw + e];
                            for (i64 z = 0; z < D; ++z)
                                for (i64 yy = 0; yy < H; ++yy) {
                                    const T* src = xc + (z * H + yy) * W;
                                    T* dst = yc + ((z * g.stride[0] + a) * Ho +
                                                   (yy * g.stride[1] + c)) * Wo + e;
                                    for (i64 xx = 0; xx < W; ++xx)
                                        dst[xx * g.stride[2]] += wv * src[xx];
                                }
                        }
            }
    }
}

template <class T>
void transposed_conv3d_backward(const TransposedGeom& g, std::span<const T> x,
                                std::span<const T> w, std::span<const T> gy, std::span<T> gx,
                                std::span<T> gw, std::span<T> gb) {
    const auto [D, H, W] = g.in;
    const auto [kd, kh, kw] = g.kernel;
    const auto [Do, Ho, Wo] = g.out;
    const i64 kvol = kd * kh * kw;
    const i64 So = Do * Ho * Wo;
    for (i64 b = 0; b < g.batch; ++b) {
        const T* gyb = gy.data() + b * g.cout * So;
        if (!gb.empty())
            for (i64 co = 0; co < g.cout; ++co) {
                T s{0};
                for (i64 i = 0; i < So; ++i) s += gyb[co * So + i];
                gb[co] += s;
            }
        for (i64 ci = 0; ci < g.cin; ++ci) {
            const T* xc = x.data() + (b * g.cin + ci) * D * H * W;
            T* gxc = gx.empty() ? nullptr : gx.data() + (b * g.cin + ci) * D * H * W;
            for (i64 co = 0; co < g.cout; ++co) {
                const T* wk = w.data() + (ci * g.cout + co) * kvol;
                T* gwk = gw.empty() ? nullptr : gw.data() + (ci * g.cout + co) * kvol;
                const T* gyc = gyb + co * So;
                for (i64 a = 0; a < kd; ++a)
                    for (i64 c = 0; c < kh; ++c)
                        for (i64 e = 0; e < kw; ++e) {
                            const i64 kidx = (a * kh + c) * kw + e;
                            const T wv = wk[kidx];
                            T wsum{0};
                            for (i64 z = 0; z < D; ++z)
                                for (i64 yy = 0; yy < H; ++yy) {
                                    const T* src = xc + (z * H + yy) * W;
                                    const T* g_row = gyc + ((z * g.stride[0] + a) * Ho +
                                                            (yy * g.stride[1] + c)) * Wo + e;
                                    if (gxc) {
                                        T* dst = gxc + (z * H + yy) * W;
                                        for (i64 xx = 0; xx < W; ++xx)
                                            dst[xx] += wv * g_row[xx * g.stride[2]];
                                    }
                                    if (gwk)
                                        for (i64 xx = 0; xx < W; ++xx)
                                            wsum += src[xx] * g_row[xx * g.stride[2]];
                                }
                            if (gwk) gwk[kidx] += wsum;
                        }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Max pooling with window == stride == 2. argmax records the flat input index of the
// first maximal element of each block (z, then y, then x scan order).

template <class T>
void maxpool3d_forward(const Shape& xs, std::span<const T> x, std::span<T> y,
                       std::span<i64> argmax) {
    const i64 BC = xs[0] * xs[1];
    const i64 D = xs[2], H = xs[3], W = xs[4];
    const i64 Do = D / 2, Ho = H / 2, Wo = W / 2;
    i64 o = 0;
    for (i64 bc = 0; bc < BC; ++bc) {
        const i64 base = bc * D * H * W;
        for (i64 z = 0; z < Do; ++z)
            for (i64 yy = 0; yy < Ho; ++yy)
                for (i64 xx = 0; xx < Wo; ++xx, ++o) {
                    i64 best = base + ((2 * z) * H + 2 * yy) * W + 2 * xx;
                    T bv = x[best];
                    for (i64 a = 0; a < 2; ++a)
                        for (i64 c = 0; c < 2; ++c)
                            for (i64 e = 0; e < 2; ++e) {
                                const i64 idx = base + ((2 * z + a) * H + 2 * yy + c) * W + 2 * xx + e;
                                if (x[idx] > bv) {
                                    bv = x[idx];
                                    best = idx;
                                }
                            }
                    y[o] = bv;
                    argmax[o] = best;
                }
    }
}

// ---------------------------------------------------------------------------
// Instance normalization over the spatial axes of each (batch, channel) slice.

template <class T>
void instance_norm_forward(i64 B, i64 C, i64 S, std::span<const T> x, std::span<const T> gamma,
                           std::span<const T> beta, T eps, std::span<T> y, std::span<T> xhat,
                           std::span<T> inv_std) {
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            const i64 off = (b * C + c) * S;
            double mean = 0.0;
            for (i64 i = 0; i < S; ++i) mean += static_cast<double>(x[off + i]);
            mean /= static_cast<double>(S);
            double var = 0.0;
            for (i64 i = 0; i < S; ++i) {
                const double d = static_cast<double>(x[off + i]) - mean;
                var += d * d;
            }
            var /= static_cast<double>(S);
            const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            inv_std[b * C + c] = is;
            const T m = static_cast<T>(mean);
            for (i64 i = 0; i < S; ++i) {
                const T h = (x[off + i] - m) * is;
                xhat[off + i] = h;
                y[off + i] = h * gamma[c] + beta[c];
            }
        }
}

template <class T>
void instance_norm_backward(i64 B, i64 C, i64 S, std::span<const T> gamma,
                            std::span<const T> xhat, std::span<const T> inv_std,
                            std::span<const T> gy, std::span<T> gx, std::span<T> ggamma,
                            std::span<T> gbeta) {
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            const i64 off = (b * C + c) * S;
            double sum_g = 0.0, sum_gh = 0.0;
            for (i64 i = 0; i < S; ++i) {
                sum_g += static_cast<double>(gy[off + i]);
                sum_gh += static_cast<double>(gy[off + i]) * static_cast<double>(xhat[off + i]);
            }
            if (!ggamma.empty()) ggamma[c] += static_cast<T>(sum_gh);
            if (!gbeta.empty()) gbeta[c] += static_cast<T>(sum_g);
            if (gx.empty()) continue;
            // dx = inv_std * gamma / S * (S*g - sum(g) - xhat * sum(g*xhat))
            const double n = static_cast<double>(S);
            const double scale = static_cast<double>(inv_std[b * C + c]) *
                                 static_cast<double>(gamma[c]) / n;
            const T t_scale = static_cast<T>(scale);
            const T t_n = static_cast<T>(n);
            const T t_sg = static_cast<T>(sum_g);
            const T t_sgh = static_cast<T>(sum_gh);
            for (i64 i = 0; i < S; ++i)
                gx[off + i] += t_scale * (t_n * gy[off + i] - t_sg - xhat[off + i] * t_sgh);
        }
}

}  // namespace lrr::ad::kernels
