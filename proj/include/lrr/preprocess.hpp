#pragma once

// Per-patient ingestion and normalization, crop sizing, network input assembly and
// cohort partitioning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lrr/autodiff/tensor.hpp"
#include "lrr/rng.hpp"
#include "lrr/volgrid.hpp"

namespace lrr {

enum class CaseRole { RelapseTask, PretrainTask };

inline std::string to_string(CaseRole r) {
    return r == CaseRole::RelapseTask ? "relapse-task" : "pretrain-task";
}

inline CaseRole parse_role(const std::string& s) {
    if (s == "relapse-task") return CaseRole::RelapseTask;
    if (s == "pretrain-task") return CaseRole::PretrainTask;
    throw ValidationError("unknown case role '" + s + "'");
}

struct PatientCase {
    std::string id;
    CaseRole role = CaseRole::RelapseTask;
    Volume3D ct;
    Volume3D pet;  // on ct.grid after ingestion
    Mask3D gtv;
    std::optional<Mask3D> relapse;
    Mask3D brain;
    std::map<std::string, std::string> meta;
};

/// Brings every image of a case onto the CT grid: PET by trilinear interpolation (fill 0),
/// masks by nearest neighbour. Rejects empty GTV or relapse masks.
inline PatientCase ingest_case(PatientCase c) {
    c.ct.grid.validate();
    require_finite(c.ct.data, "ct");
    require_finite(c.pet.data, "pet");
    const Grid3D& g = c.ct.grid;
    if (!c.pet.grid.same_as(g)) c.pet = resample_linear(c.pet, g, 0.0f);
    if (!c.gtv.grid.same_as(g)) c.gtv = resample_nearest_mask(c.gtv, g);
    if (!c.brain.grid.same_as(g)) c.brain = resample_nearest_mask(c.brain, g);
    if (c.relapse && !c.relapse->grid.same_as(g)) c.relapse = resample_nearest_mask(*c.relapse, g);
    if (count_foreground(c.gtv) == 0) throw ValidationError(c.id + ": GTV mask is empty");
    if (c.relapse && count_foreground(*c.relapse) == 0)
        throw ValidationError(c.id + ": relapse mask is empty");
    return c;
}

inline constexpr float kCtClipHu = 1024.0f;

/// clamp(v, -1024, 1024) / 1024
inline Volume3D normalize_ct(const Volume3D& ct) {
    Volume3D out = ct;
    for (float& v : out.data) {
        if (std::isnan(v)) throw ValidationError("normalize_ct: NaN input");
        v = std::clamp(v, -kCtClipHu, kCtClipHu) / kCtClipHu;
    }
    return out;
}

/// Patient-level z-score over every voxel, population standard deviation.
inline Volume3D normalize_pet_zscore(const Volume3D& pet) {
    require_finite(pet.data, "normalize_pet_zscore");
    const double n = static_cast<double>(pet.data.size());
    double mean = 0.0;
    for (float v : pet.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : pet.data) var += (v - mean) * (v - mean);
    var /= n;
    if (!(var > 0.0)) throw DegenerateInputError("normalize_pet_zscore: zero variance");
    const double inv = 1.0 / std::sqrt(var);
    Volume3D out = pet;
    for (float& v : out.data) v = static_cast<float>((v - mean) * inv);
    return out;
}

inline PatientCase normalize_case(const PatientCase& c) {
    PatientCase out = c;
    out.ct = normalize_ct(c.ct);
    out.pet = normalize_pet_zscore(c.pet);
    return out;
}

/// Rounded mean voxel index of the foreground.
inline Index3 mask_centroid_voxel(const Mask3D& m) {
    double s[3] = {0, 0, 0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!m.data[i]) continue;
        const Index3 v = m.grid.unravel(i);
        for (int a = 0; a < 3; ++a) s[a] += static_cast<double>(v[a]);
        ++n;
    }
    if (n == 0) throw ValidationError("centroid of an empty mask");
    Index3 c{};
    for (int a = 0; a < 3; ++a)
        c[a] = static_cast<std::int64_t>(std::floor(s[a] / static_cast<double>(n) + 0.5));
    return c;
}

struct CropSpec {
    std::array<std::int64_t, 3> dims{160, 224, 128};  // x, y, z voxels
    double padding_fraction = 0.15;

    /// Clinical default box: 160 x 224 x 128 voxels.
    static CropSpec clinical() { return {}; }

    void validate(int levels) const {
        const std::int64_t m = std::int64_t{1} << (levels - 1);
        for (auto d : dims)
            if (d < 1 || d % m != 0)
                throw ValidationError("crop dims must be positive multiples of " +
                                      std::to_string(m));
    }
};

inline std::int64_t round_up_to_multiple(std::int64_t v, std::int64_t m) {
    v = std::max<std::int64_t>(v, 1);
    return (v + m - 1) / m * m;
}

/// Largest distance (mm) from the GTV centroid voxel to any voxel of GTV union relapse.
inline double gtv_reach_mm(const PatientCase& c) {
    const Index3 ctr = mask_centroid_voxel(c.gtv);
    const Vec3 pc = c.gtv.grid.physical(ctr);
    double r2 = 0.0;
    for (std::size_t i = 0; i < c.gtv.data.size(); ++i) {
        if (!c.gtv.data[i] && !(c.relapse && c.relapse->data[i])) continue;
        const Vec3 p = c.gtv.grid.physical(c.gtv.grid.unravel(i));
        double d2 = 0.0;
        for (int a = 0; a < 3; ++a) d2 += (p[a] - pc[a]) * (p[a] - pc[a]);
        r2 = std::max(r2, d2);
    }
    return std::sqrt(r2);
}

/// Crop box that covers every GTV and relapse of the given cases with a margin:
/// dims = ceil(2 r (1 + padding) / spacing), rounded up to a multiple of 2^(levels-1).
inline CropSpec compute_crop_extent(const std::vector<const PatientCase*>& cases,
                                    double padding_fraction, int levels) {
    if (cases.empty()) throw ValidationError("compute_crop_extent: no cases");
    const std::int64_t m = std::int64_t{1} << (levels - 1);
    CropSpec spec;
    spec.padding_fraction = padding_fraction;
    spec.dims = {m, m, m};
    for (const PatientCase* c : cases) {
        if (count_foreground(c->gtv) == 0)
            throw ValidationError(c->id + ": GTV mask is empty");
        const double half = gtv_reach_mm(*c) * (1.0 + padding_fraction);
        for (int a = 0; a < 3; ++a) {
            const double vox = 2.0 * half / c->gtv.grid.spacing[a];
            const auto need = static_cast<std::int64_t>(std::ceil(vox - 1e-9));
            spec.dims[a] = std::max(spec.dims[a], round_up_to_multiple(need, m));
        }
    }
    return spec;
}

enum class LabelSource { Relapse, Gtv };

template <class T>
struct AssembledInput {
    ad::Tensor<T> input;  // [2, cz, cy, cx]: normalized CT, normalized PET
    ad::Tensor<T> label;  // [1, cz, cy, cx]
    Index3 center{};
    Grid3D crop_grid;
};

/// Crops a normalized case about its GTV centroid into network tensors.
template <class T>
AssembledInput<T> assemble_input(const PatientCase& normalized, const CropSpec& spec,
                                 LabelSource label = LabelSource::Relapse) {
    AssembledInput<T> out;
    out.center = mask_centroid_voxel(normalized.gtv);
    const auto ct = crop_centered(normalized.ct, out.center, spec.dims, -1.0f);
    const auto pet = crop_centered(normalized.pet, out.center, spec.dims, 0.0f);
    const Mask3D* lab = &normalized.gtv;
    if (label == LabelSource::Relapse) {
        if (!normalized.relapse) throw ValidationError(normalized.id + ": no relapse mask");
        lab = &*normalized.relapse;
    }
    const auto lm = crop_centered(*lab, out.center, spec.dims, std::uint8_t{0});
    out.crop_grid = ct.grid;

    const std::int64_t n = static_cast<std::int64_t>(ct.data.size());
    const ad::Shape sp{spec.dims[2], spec.dims[1], spec.dims[0]};
    out.input = ad::Tensor<T>({2, sp[0], sp[1], sp[2]});
    out.label = ad::Tensor<T>({1, sp[0], sp[1], sp[2]});
    for (std::int64_t i = 0; i < n; ++i) {
        out.input.data[i] = static_cast<T>(ct.data[i]);
        out.input.data[n + i] = static_cast<T>(pet.data[i]);
        out.label.data[i] = static_cast<T>(lm.data[i]);
    }
    return out;
}

struct CohortSplit {
    std::vector<std::string> train, val, test;
    std::uint64_t seed = 0;
};

inline std::int64_t round_half_up(double v) { return static_cast<std::int64_t>(std::floor(v + 0.5)); }

/// Seeded shuffle, then val = test = round(0.2 n) and train takes the remainder.
inline CohortSplit split_cohort(std::vector<std::string> ids, std::uint64_t seed) {
    const auto n = static_cast<std::int64_t>(ids.size());
    if (n < 3) throw ValidationError("split_cohort: need at least 3 cases");
    Rng rng(sub_seed(seed, "split"));
    for (std::int64_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    const std::int64_t n_val = round_half_up(0.2 * static_cast<double>(n));
    const std::int64_t n_train = n - 2 * n_val;
    CohortSplit s;
    s.seed = seed;
    s.train.assign(ids.begin(), ids.begin() + n_train);
    s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    s.test.assign(ids.begin() + n_train + n_val, ids.end());
    return s;
}

}  // namespace lrr
