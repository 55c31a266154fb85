#pragma once

// Connected-component labelling and erosion-based point-of-origin extraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "lrr/volgrid.hpp"

namespace lrr::analysis {

struct LabeledComponents {
    Grid3D grid;
    std::vector<std::int32_t> labels;                // 0 = background, else 1..count
    std::vector<std::vector<std::size_t>> voxels;    // ascending linear indices, per label - 1

    std::size_t count() const { return voxels.size(); }
};

namespace detail {

struct DisjointSet {
    std::vector<std::uint32_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::uint32_t{0});
    }
    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

}  // namespace detail

/// Labels foreground voxels under 6- or 26-connectivity. Labels are numbered in scan order
/// of each component's first voxel.
inline LabeledComponents connected_components(const Mask3D& mask, int connectivity = 26) {
    if (connectivity != 6 && connectivity != 26)
        throw ValidationError("connectivity must be 6 or 26");
    const auto [nx, ny, nz] = mask.grid.dims;
    const std::size_t n = mask.data.size();
    detail::DisjointSet ds(n);

    // Backward half-neighbourhood: offsets already visited in scan order.
    std::vector<Index3> offsets;
    for (std::int64_t dz = -1; dz <= 0; ++dz)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
                if (connectivity == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1) continue;
                offsets.push_back({dx, dy, dz});
            }

    for (std::int64_t k = 0; k < nz; ++k)
        for (std::int64_t j = 0; j < ny; ++j)
            for (std::int64_t i = 0; i < nx; ++i) {
                const std::size_t idx = mask.grid.linear(i, j, k);
                if (!mask.data[idx]) continue;
                for (const auto& o : offsets) {
                    const Index3 q{i + o[0], j + o[1], k + o[2]};
                    if (!mask.grid.contains(q)) continue;
                    const std::size_t qi = mask.grid.linear(q);
                    if (mask.data[qi])
                        ds.unite(static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(qi));
                }
            }

    LabeledComponents out;
    out.grid = mask.grid;
    out.labels.assign(n, 0);
    std::vector<std::int32_t> root_label(n, 0);
    for (std::size_t idx = 0; idx < n; ++idx) {
        if (!mask.data[idx]) continue;
        const std::uint32_t r = ds.find(static_cast<std::uint32_t>(idx));
        if (root_label[r] == 0) {
            out.voxels.emplace_back();
            root_label[r] = static_cast<std::int32_t>(out.voxels.size());
        }
        out.labels[idx] = root_label[r];
        out.voxels[static_cast<std::size_t>(root_label[r] - 1)].push_back(idx);
    }
    return out;
}

struct PointOfOrigin {
    Index3 voxel{};
    std::int32_t label = 0;
    Vec3 position_mm{};
};

/// Erodes the component with a full 3x3x3 structuring element until one more erosion would
/// leave nothing, then takes the rounded centroid of the survivors. If that voxel is not a
/// survivor, the survivor nearest the centroid wins (lowest linear index on ties).
inline PointOfOrigin point_of_origin(const std::vector<std::size_t>& component, const Grid3D& grid,
                                     std::int32_t label = 1) {
    if (component.empty()) throw ValidationError("point_of_origin: empty component");

    Index3 lo{std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max(),
              std::numeric_limits<std::int64_t>::max()};
    Index3 hi{std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::min(),
              std::numeric_limits<std::int64_t>::min()};
    for (std::size_t idx : component) {
        const Index3 v = grid.unravel(idx);
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], v[a]);
            hi[a] = std::max(hi[a], v[a]);
        }
    }
    // Local box with a one-voxel background margin; everything outside counts as background.
    Index3 start{}, ext{};
    for (int a = 0; a < 3; ++a) {
        start[a] = lo[a] - 1;
        ext[a] = hi[a] - lo[a] + 3;
    }
    auto local = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
        return static_cast<std::size_t>(i + ext[0] * (j + ext[1] * k));
    };
    std::vector<std::uint8_t> cur(static_cast<std::size_t>(ext[0] * ext[1] * ext[2]), 0);
    for (std::size_t idx : component) {
        const Index3 v = grid.unravel(idx);
        cur[local(v[0] - start[0], v[1] - start[1], v[2] - start[2])] = 1;
    }

    std::vector<std::uint8_t> next(cur.size());
    for (;;) {
        std::fill(next.begin(), next.end(), 0);
        bool any = false;
        for (std::int64_t k = 1; k + 1 < ext[2]; ++k)
            for (std::int64_t j = 1; j + 1 < ext[1]; ++j)
                for (std::int64_t i = 1; i + 1 < ext[0]; ++i) {
                    if (!cur[local(i, j, k)]) continue;
                    bool keep = true;
                    for (std::int64_t dz = -1; dz <= 1 && keep; ++dz)
                        for (std::int64_t dy = -1; dy <= 1 && keep; ++dy)
                            for (std::int64_t dx = -1; dx <= 1 && keep; ++dx)
                                keep = cur[local(i + dx, j + dy, k + dz)] != 0;
                    if (keep) {
                        next[local(i, j, k)] = 1;
                        any = true;
                    }
                }
        if (!any) break;
        cur.swap(next);
    }

    double s[3] = {0, 0, 0};
    std::size_t n = 0;
    for (std::int64_t k = 0; k < ext[2]; ++k)
        for (std::int64_t j = 0; j < ext[1]; ++j)
            for (std::int64_t i = 0; i < ext[0]; ++i)
                if (cur[local(i, j, k)]) {
                    s[0] += static_cast<double>(i);
                    s[1] += static_cast<double>(j);
                    s[2] += static_cast<double>(k);
                    ++n;
                }
    const double c[3] = {s[0] / static_cast<double>(n), s[1] / static_cast<double>(n),
                         s[2] / static_cast<double>(n)};
    Index3 best{};
    for (int a = 0; a < 3; ++a) best[a] = static_cast<std::int64_t>(std::floor(c[a] + 0.5));

    if (!cur[local(best[0], best[1], best[2])]) {
        double best_d = std::numeric_limits<double>::infinity();
        std::size_t best_lin = std::numeric_limits<std::size_t>::max();
        for (std::int64_t k = 0; k < ext[2]; ++k)
            for (std::int64_t j = 0; j < ext[1]; ++j)
                for (std::int64_t i = 0; i < ext[0]; ++i) {
                    if (!cur[local(i, j, k)]) continue;
                    const double d = (i - c[0]) * (i - c[0]) + (j - c[1]) * (j - c[1]) +
                                     (k - c[2]) * (k - c[2]);
                    const std::size_t lin =
                        grid.linear(i + start[0], j + start[1], k + start[2]);
                    if (d < best_d || (d == best_d && lin < best_lin)) {
                        best_d = d;
                        best_lin = lin;
                        best = {i, j, k};
                    }
                }
    }

    PointOfOrigin po;
    po.label = label;
    for (int a = 0; a < 3; ++a) po.voxel[a] = best[a] + start[a];
    po.position_mm = grid.physical(po.voxel);
    return po;
}

/// One point of origin per connected component of the mask.
inline std::vector<PointOfOrigin> points_of_origin(const Mask3D& mask, int connectivity = 26) {
    const auto cc = connected_components(mask, connectivity);
    std::vector<PointOfOrigin> out;
    for (std::size_t l = 0; l < cc.count(); ++l)
        out.push_back(point_of_origin(cc.voxels[l], mask.grid, static_cast<std::int32_t>(l + 1)));
    return out;
}

struct Inclusion {
    std::size_t included = 0;
    std::size_t total = 0;
};

inline Inclusion po_inclusion(const Mask3D& pred, const std::vector<PointOfOrigin>& pos) {
    Inclusion r;
    r.total = pos.size();
    for (const auto& p : pos)
        if (pred.grid.contains(p.voxel) && pred.at(p.voxel)) ++r.included;
    return r;
}

}  // namespace lrr::analysis
