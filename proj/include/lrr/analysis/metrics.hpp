#pragma once

#include <cstddef>

#include "lrr/volgrid.hpp"

namespace lrr::analysis {

struct OverlapCounts {
    std::size_t pred = 0;
    std::size_t gt = 0;
    std::size_t both = 0;
};

inline OverlapCounts overlap_counts(const Mask3D& pred, const Mask3D& gt) {
    require_same_grid(pred.grid, gt.grid, "overlap");
    OverlapCounts c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        c.pred += p;
        c.gt += g;
        c.both += p && g;
    }
    return c;
}

// Empty-set conventions: Dice(empty, empty) = 1; precision(empty, gt) = 0 for non-empty gt
// and 1 when both are empty; recall(pred, empty) = 1.

inline double dice(const OverlapCounts& c) {
    if (c.pred + c.gt == 0) return 1.0;
    return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.pred + c.gt);
}

inline double precision(const OverlapCounts& c) {
    if (c.pred == 0) return c.gt == 0 ? 1.0 : 0.0;
    return static_cast<double>(c.both) / static_cast<double>(c.pred);
}

inline double recall(const OverlapCounts& c) {
    if (c.gt == 0) return 1.0;
    return static_cast<double>(c.both) / static_cast<double>(c.gt);
}

inline double dice(const Mask3D& pred, const Mask3D& gt) { return dice(overlap_counts(pred, gt)); }
inline double precision(const Mask3D& pred, const Mask3D& gt) {
    return precision(overlap_counts(pred, gt));
}
inline double recall(const Mask3D& pred, const Mask3D& gt) {
    return recall(overlap_counts(pred, gt));
}

/// Foreground volume in cubic centimetres.
inline double mask_volume_cc(const Mask3D& m) {
    return static_cast<double>(count_foreground(m)) * voxel_volume_cc(m.grid);
}

}  // namespace lrr::analysis
