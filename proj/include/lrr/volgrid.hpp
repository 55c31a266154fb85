#pragma once

// Physical-space voxel grids and the scalar/binary fields that live on them.
//
// Voxel (i, j, k) sits at  origin + D * (i*sx, j*sy, k*sz)  and is stored at
// linear index  i + nx * (j + ny * k)  (x fastest).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lrr/error.hpp"

namespace lrr {

using Index3 = std::array<std::int64_t, 3>;
using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major

inline constexpr Mat3 kIdentityDirection{1, 0, 0, 0, 1, 0, 0, 0, 1};
inline constexpr double kGeometryTolerance = 1e-6;

struct Grid3D {
    std::array<std::int64_t, 3> dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    Mat3 direction = kIdentityDirection;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    }

    std::size_t linear(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k));
    }
    std::size_t linear(const Index3& v) const { return linear(v[0], v[1], v[2]); }

    Index3 unravel(std::size_t idx) const {
        const auto n = static_cast<std::int64_t>(idx);
        return {n % dims[0], (n / dims[0]) % dims[1], n / (dims[0] * dims[1])};
    }

    bool contains(const Index3& v) const {
        return v[0] >= 0 && v[1] >= 0 && v[2] >= 0 && v[0] < dims[0] && v[1] < dims[1] &&
               v[2] < dims[2];
    }

    /// Physical position (mm) of a possibly fractional voxel index.
    Vec3 physical(double i, double j, double k) const {
        const Vec3 s{i * spacing[0], j * spacing[1], k * spacing[2]};
        Vec3 p{};
        for (int r = 0; r < 3; ++r)
            p[r] = origin[r] + direction[3 * r] * s[0] + direction[3 * r + 1] * s[1] +
                   direction[3 * r + 2] * s[2];
        return p;
    }
    Vec3 physical(const Index3& v) const {
        return physical(static_cast<double>(v[0]), static_cast<double>(v[1]),
                        static_cast<double>(v[2]));
    }

    /// Inverse of physical(); relies on D being orthonormal (D^-1 = D^T).
    Vec3 continuous_index(const Vec3& p) const {
        const Vec3 d{p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]};
        Vec3 c{};
        for (int a = 0; a < 3; ++a)
            c[a] = (direction[a] * d[0] + direction[3 + a] * d[1] + direction[6 + a] * d[2]) /
                   spacing[a];
        return c;
    }

    void validate() const {
        for (int a = 0; a < 3; ++a) {
            if (dims[a] < 1) throw GeometryError("grid dims must be >= 1");
            if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
                throw GeometryError("grid spacing must be finite and > 0");
            if (!std::isfinite(origin[a])) throw GeometryError("grid origin must be finite");
        }
        // ||D^T D - I||_inf
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double dot = 0.0;
                for (int m = 0; m < 3; ++m) dot += direction[3 * m + r] * direction[3 * m + c];
                if (std::abs(dot - (r == c ? 1.0 : 0.0)) >= kGeometryTolerance)
                    throw GeometryError("direction matrix is not orthonormal");
            }
    }

    bool same_as(const Grid3D& o, double tol = kGeometryTolerance) const {
        if (dims != o.dims) return false;
        for (int a = 0; a < 3; ++a)
            if (std::abs(spacing[a] - o.spacing[a]) > tol ||
                std::abs(origin[a] - o.origin[a]) > tol)
                return false;
        for (int a = 0; a < 9; ++a)
            if (std::abs(direction[a] - o.direction[a]) > tol) return false;
        return true;
    }
};

/// Dense scalar field on a Grid3D. Volume3D holds intensities, Mask3D holds {0,1}.
template <class T>
struct Field3D {
    Grid3D grid;
    std::vector<T> data;

    Field3D() = default;
    explicit Field3D(const Grid3D& g, T fill = T{}) : grid(g), data(g.voxel_count(), fill) {}
    Field3D(const Grid3D& g, std::vector<T> values) : grid(g), data(std::move(values)) {
        if (data.size() != grid.voxel_count())
            throw ValidationError("field data length does not match grid dims");
    }

    T& at(std::int64_t i, std::int64_t j, std::int64_t k) { return data[grid.linear(i, j, k)]; }
    const T& at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data[grid.linear(i, j, k)];
    }
    T& at(const Index3& v) { return data[grid.linear(v)]; }
    const T& at(const Index3& v) const { return data[grid.linear(v)]; }

    std::size_t size() const { return data.size(); }
};

using Volume3D = Field3D<float>;
using Mask3D = Field3D<std::uint8_t>;

inline std::size_t count_foreground(const Mask3D& m) {
    return static_cast<std::size_t>(std::count(m.data.begin(), m.data.end(), std::uint8_t{1}));
}

inline void require_same_grid(const Grid3D& a, const Grid3D& b, const char* what) {
    if (!a.same_as(b)) throw GeometryError(std::string(what) + ": grids differ");
}

inline void require_finite(std::span<const float> v, const char* what) {
    for (float x : v)
        if (!std::isfinite(x)) throw ValidationError(std::string(what) + ": non-finite value");
}

namespace detail {

// Snaps near-integer continuous indices so identity resampling is exact.
inline double snap(double c) {
    const double r = std::round(c);
    return std::abs(c - r) < kGeometryTolerance ? r : c;
}

}  // namespace detail

/// Trilinear resampling of `src` onto `target`. Samples whose physical position falls
/// outside the box spanned by src voxel centres take `fill`.
inline Volume3D resample_linear(const Volume3D& src, const Grid3D& target, float fill) {
    src.grid.validate();
    target.validate();
    if (src.grid.same_as(target, 0.0)) return Volume3D(target, src.data);

    Volume3D out(target, fill);
    const auto& n = src.grid.dims;
    for (std::int64_t k = 0; k < target.dims[2]; ++k)
        for (std::int64_t j = 0; j < target.dims[1]; ++j)
            for (std::int64_t i = 0; i < target.dims[0]; ++i) {
                const Vec3 c = src.grid.continuous_index(target.physical(
                    static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)));
                std::array<std::int64_t, 3> base{};
                std::array<double, 3> frac{};
                bool inside = true;
                for (int a = 0; a < 3 && inside; ++a) {
                    const double ca = detail::snap(c[a]);
                    if (ca < 0.0 || ca > static_cast<double>(n[a] - 1)) {
                        inside = false;
                        break;
                    }
                    auto b = static_cast<std::int64_t>(std::floor(ca));
                    if (b > n[a] - 2) b = std::max<std::int64_t>(n[a] - 2, 0);
                    base[a] = b;
                    frac[a] = n[a] == 1 ? 0.0 : ca - static_cast<double>(b);
                }
                if (!inside) continue;

                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz) {
                    const double wz = dz ? frac[2] : 1.0 - frac[2];
                    if (wz == 0.0) continue;
                    for (int dy = 0; dy < 2; ++dy) {
                        const double wy = dy ? frac[1] : 1.0 - frac[1];
                        if (wy == 0.0) continue;
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wx = dx ? frac[0] : 1.0 - frac[0];
                            if (wx == 0.0) continue;
                            acc += wz * wy * wx *
                                   src.at(base[0] + dx, base[1] + dy, base[2] + dz);
                        }
                    }
                }
                out.at(i, j, k) = static_cast<float>(acc);
            }
    return out;
}

/// Nearest-neighbour resampling for masks; samples with no source voxel are 0.
inline Mask3D resample_nearest_mask(const Mask3D& src, const Grid3D& target) {
    src.grid.validate();
    target.validate();
    if (src.grid.same_as(target, 0.0)) return Mask3D(target, src.data);

    Mask3D out(target, 0);
    for (std::int64_t k = 0; k < target.dims[2]; ++k)
        for (std::int64_t j = 0; j < target.dims[1]; ++j)
            for (std::int64_t i = 0; i < target.dims[0]; ++i) {
                const Vec3 c = src.grid.continuous_index(target.physical(
                    static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)));
                Index3 v{};
                for (int a = 0; a < 3; ++a)
                    v[a] = static_cast<std::int64_t>(std::floor(detail::snap(c[a]) + 0.5));
                if (src.grid.contains(v)) out.at(i, j, k) = src.at(v);
            }
    return out;
}

/// Extracts an out_dims box positioned so that `center` lands on voxel floor(out_dims/2).
/// The output grid keeps spacing and direction; its origin moves so every copied voxel
/// keeps its physical position. Voxels outside the source take `fill`.
template <class T>
Field3D<T> crop_centered(const Field3D<T>& vol, const Index3& center,
                         const std::array<std::int64_t, 3>& out_dims, T fill) {
    for (auto d : out_dims)
        if (d < 1) throw ValidationError("crop dims must be >= 1");
    Index3 start{};
    for (int a = 0; a < 3; ++a) start[a] = center[a] - out_dims[a] / 2;

    Grid3D g = vol.grid;
    g.dims = out_dims;
    g.origin = vol.grid.physical(start);
    Field3D<T> out(g, fill);
    for (std::int64_t k = 0; k < out_dims[2]; ++k) {
        const std::int64_t sk = start[2] + k;
        if (sk < 0 || sk >= vol.grid.dims[2]) continue;
        for (std::int64_t j = 0; j < out_dims[1]; ++j) {
            const std::int64_t sj = start[1] + j;
            if (sj < 0 || sj >= vol.grid.dims[1]) continue;
            for (std::int64_t i = 0; i < out_dims[0]; ++i) {
                const std::int64_t si = start[0] + i;
                if (si < 0 || si >= vol.grid.dims[0]) continue;
                out.at(i, j, k) = vol.at(si, sj, sk);
            }
        }
    }
    return out;
}

/// Inverse of crop_centered: places `crop` back onto `full` about `center`, `fill` elsewhere.
template <class T>
Field3D<T> uncrop_centered(const Field3D<T>& crop, const Grid3D& full, const Index3& center, T fill) {
    const auto& d = crop.grid.dims;
    Field3D<T> out(full, fill);
    for (std::int64_t k = 0; k < d[2]; ++k)
        for (std::int64_t j = 0; j < d[1]; ++j)
            for (std::int64_t i = 0; i < d[0]; ++i) {
                const Index3 q{center[0] - d[0] / 2 + i, center[1] - d[1] / 2 + j,
                               center[2] - d[2] / 2 + k};
                if (full.contains(q)) out.at(q) = crop.at(i, j, k);
            }
    return out;
}

/// Index-space mirror along x; the grid is left untouched.
template <class T>
Field3D<T> flip_x(const Field3D<T>& f) {
    Field3D<T> out = f;
    const auto nx = f.grid.dims[0];
    for (std::int64_t k = 0; k < f.grid.dims[2]; ++k)
        for (std::int64_t j = 0; j < f.grid.dims[1]; ++j)
            for (std::int64_t i = 0; i < nx; ++i) out.at(i, j, k) = f.at(nx - 1 - i, j, k);
    return out;
}

/// Volume of one voxel in cubic centimetres.
inline double voxel_volume_cc(const Grid3D& g) {
    return g.spacing[0] * g.spacing[1] * g.spacing[2] / 1000.0;
}

}  // namespace lrr
