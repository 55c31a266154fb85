#pragma once

// Synthetic PET/CT cohort with a known answer.
//
// Each case has an ellipsoidal tumour (the GTV) and a Gaussian FDG uptake bump whose peak
// sits on a voxel inside the tumour. The relapse is the ellipsoid centred on that peak whose
// surface is exactly the PET iso-level at `boundary_fraction` of SUVmax, so thresholding the
// noiseless PET at that fraction reproduces the relapse mask.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrr/analysis/components.hpp"
#include "lrr/preprocess.hpp"
#include "lrr/rng.hpp"

namespace lrr::phantom {

using nlohmann::json;

struct PhantomParams {
    std::array<std::int64_t, 3> dims{48, 48, 40};
    Vec3 spacing{2.0, 2.0, 2.0};
    Vec3 origin{0.0, 0.0, 0.0};
    int pet_downsample = 1;  // PET generated at this integer multiple of the CT spacing

    Vec3 body_radii_mm{44.0, 44.0, 38.0};
    Vec3 tumour_center_jitter_mm{8.0, 8.0, 4.0};  // around the volume centre
    Vec3 tumour_radius_min_mm{8.0, 8.0, 8.0};
    Vec3 tumour_radius_max_mm{13.0, 13.0, 12.0};
    double peak_offset_fraction = 0.3;  // |peak - tumour centre| <= fraction * radius per axis
    double relapse_radius_fraction_min = 0.5;
    double relapse_radius_fraction_max = 0.8;

    double uptake_peak_min = 6.0;  // SUV above background
    double uptake_peak_max = 12.0;
    double background_suv = 1.0;
    double boundary_fraction_min = 0.35;
    double boundary_fraction_max = 0.45;
    double pet_noise_sd = 0.15;

    Vec3 brain_offset_mm{0.0, 0.0, 28.0};
    Vec3 brain_radii_mm{24.0, 24.0, 10.0};
    double brain_suv = 5.0;

    double ct_air_hu = -1000.0;
    double ct_tissue_hu = 40.0;
    double ct_tumour_hu = 70.0;
    double ct_brain_hu = 30.0;
    double ct_noise_sd = 15.0;

    int n_pretrain = 12;
    std::uint64_t seed = 1;

    Grid3D ct_grid() const {
        Grid3D g;
        g.dims = dims;
        g.spacing = spacing;
        g.origin = origin;
        return g;
    }

    void validate() const {
        ct_grid().validate();
        auto range = [](double lo, double hi, const char* what) {
            if (!(lo <= hi)) throw ValidationError(std::string("phantom: bad range for ") + what);
        };
        for (int a = 0; a < 3; ++a) {
            range(tumour_radius_min_mm[a], tumour_radius_max_mm[a], "tumour radius");
            if (!(tumour_radius_min_mm[a] > 0.0))
                throw ValidationError("phantom: tumour radius must be > 0");
        }
        range(relapse_radius_fraction_min, relapse_radius_fraction_max, "relapse fraction");
        range(uptake_peak_min, uptake_peak_max, "uptake peak");
        range(boundary_fraction_min, boundary_fraction_max, "boundary fraction");
        if (!(relapse_radius_fraction_min > 0.0))
            throw ValidationError("phantom: relapse radius fraction must be > 0");
        if (!(uptake_peak_min > 0.0)) throw ValidationError("phantom: uptake peak must be > 0");
        if (pet_downsample < 1) throw ValidationError("phantom: pet_downsample must be >= 1");
        if (peak_offset_fraction < 0.0 || peak_offset_fraction >= 1.0)
            throw ValidationError("phantom: peak_offset_fraction must be in [0, 1)");
        const double floor_frac = background_suv / (background_suv + uptake_peak_min);
        if (!(boundary_fraction_min > floor_frac) || !(boundary_fraction_max < 1.0))
            throw ValidationError(
                "phantom: boundary fraction must lie above background/SUVmax and below 1");
    }
};

inline json to_json(const PhantomParams& p) {
    return json{{"dims", p.dims},
                {"spacing_mm", p.spacing},
                {"origin_mm", p.origin},
                {"pet_downsample", p.pet_downsample},
                {"body_radii_mm", p.body_radii_mm},
                {"tumour_center_jitter_mm", p.tumour_center_jitter_mm},
                {"tumour_radius_min_mm", p.tumour_radius_min_mm},
                {"tumour_radius_max_mm", p.tumour_radius_max_mm},
                {"peak_offset_fraction", p.peak_offset_fraction},
                {"relapse_radius_fraction_min", p.relapse_radius_fraction_min},
                {"relapse_radius_fraction_max", p.relapse_radius_fraction_max},
                {"uptake_peak_min", p.uptake_peak_min},
                {"uptake_peak_max", p.uptake_peak_max},
                {"background_suv", p.background_suv},
                {"boundary_fraction_min", p.boundary_fraction_min},
                {"boundary_fraction_max", p.boundary_fraction_max},
                {"pet_noise_sd", p.pet_noise_sd},
                {"brain_offset_mm", p.brain_offset_mm},
                {"brain_radii_mm", p.brain_radii_mm},
                {"brain_suv", p.brain_suv},
                {"ct_air_hu", p.ct_air_hu},
                {"ct_tissue_hu", p.ct_tissue_hu},
                {"ct_tumour_hu", p.ct_tumour_hu},
                {"ct_brain_hu", p.ct_brain_hu},
                {"ct_noise_sd", p.ct_noise_sd},
                {"n_pretrain", p.n_pretrain},
                {"seed", p.seed}};
}

/// Missing keys keep their defaults.
inline PhantomParams params_from_json(const json& j) {
    PhantomParams p;
    try {
        p.dims = j.value("dims", p.dims);
        p.spacing = j.value("spacing_mm", p.spacing);
        p.origin = j.value("origin_mm", p.origin);
        p.pet_downsample = j.value("pet_downsample", p.pet_downsample);
        p.body_radii_mm = j.value("body_radii_mm", p.body_radii_mm);
        p.tumour_center_jitter_mm = j.value("tumour_center_jitter_mm", p.tumour_center_jitter_mm);
        p.tumour_radius_min_mm = j.value("tumour_radius_min_mm", p.tumour_radius_min_mm);
        p.tumour_radius_max_mm = j.value("tumour_radius_max_mm", p.tumour_radius_max_mm);
        p.peak_offset_fraction = j.value("peak_offset_fraction", p.peak_offset_fraction);
        p.relapse_radius_fraction_min =
            j.value("relapse_radius_fraction_min", p.relapse_radius_fraction_min);
        p.relapse_radius_fraction_max =
            j.value("relapse_radius_fraction_max", p.relapse_radius_fraction_max);
        p.uptake_peak_min = j.value("uptake_peak_min", p.uptake_peak_min);
        p.uptake_peak_max = j.value("uptake_peak_max", p.uptake_peak_max);
        p.background_suv = j.value("background_suv", p.background_suv);
        p.boundary_fraction_min = j.value("boundary_fraction_min", p.boundary_fraction_min);
        p.boundary_fraction_max = j.value("boundary_fraction_max", p.boundary_fraction_max);
        p.pet_noise_sd = j.value("pet_noise_sd", p.pet_noise_sd);
        p.brain_offset_mm = j.value("brain_offset_mm", p.brain_offset_mm);
        p.brain_radii_mm = j.value("brain_radii_mm", p.brain_radii_mm);
        p.brain_suv = j.value("brain_suv", p.brain_suv);
        p.ct_air_hu = j.value("ct_air_hu", p.ct_air_hu);
        p.ct_tissue_hu = j.value("ct_tissue_hu", p.ct_tissue_hu);
        p.ct_tumour_hu = j.value("ct_tumour_hu", p.ct_tumour_hu);
        p.ct_brain_hu = j.value("ct_brain_hu", p.ct_brain_hu);
        p.ct_noise_sd = j.value("ct_noise_sd", p.ct_noise_sd);
        p.n_pretrain = j.value("n_pretrain", p.n_pretrain);
        p.seed = j.value("seed", p.seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("phantom parameters: ") + e.what());
    }
    p.validate();
    return p;
}

/// Ground truth recorded alongside each generated case.
struct CaseKey {
    std::string id;
    CaseRole role = CaseRole::RelapseTask;
    double boundary_fraction = 0.0;  // relapse surface as a fraction of SUVmax
    double suvmax = 0.0;             // noiseless peak value
    Index3 peak_voxel{};
    Vec3 tumour_center_mm{};
    Vec3 tumour_radii_mm{};
    Vec3 relapse_radii_mm{};
    std::vector<analysis::PointOfOrigin> points_of_origin;
};

inline json to_json(const CaseKey& k) {
    json pos = json::array();
    for (const auto& p : k.points_of_origin)
        pos.push_back({{"voxel", p.voxel}, {"label", p.label}, {"position_mm", p.position_mm}});
    return json{{"id", k.id},
                {"role", to_string(k.role)},
                {"boundary_fraction", k.boundary_fraction},
                {"boundary_percent", std::lround(k.boundary_fraction * 100.0)},
                {"suvmax", k.suvmax},
                {"peak_voxel", k.peak_voxel},
                {"tumour_center_mm", k.tumour_center_mm},
                {"tumour_radii_mm", k.tumour_radii_mm},
                {"relapse_radii_mm", k.relapse_radii_mm},
                {"points_of_origin", pos}};
}

struct GeneratedCase {
    PatientCase patient;  // PET on its acquisition grid; run ingest_case() to resample
    CaseKey key;
};

inline std::string case_id(CaseRole role, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03d", role == CaseRole::RelapseTask ? "case" : "pre",
                  index);
    return buf;
}

namespace detail {

inline double ellipsoid_q(const Vec3& p, const Vec3& c, const Vec3& r) {
    double q = 0.0;
    for (int a = 0; a < 3; ++a) q += (p[a] - c[a]) * (p[a] - c[a]) / (r[a] * r[a]);
    return q;
}

}  // namespace detail

/// Deterministic in (params.seed, role, index).
inline GeneratedCase generate_case(const PhantomParams& prm, int index,
                                   CaseRole role = CaseRole::RelapseTask) {
    prm.validate();
    Rng rng(sub_seed(prm.seed, role == CaseRole::RelapseTask ? "phantom" : "phantom-pretrain",
                     static_cast<std::uint64_t>(index)));
    std::normal_distribution<double> normal(0.0, 1.0);

    const Grid3D g = prm.ct_grid();
    Vec3 vol_center{};
    {
        const Vec3 mid = g.physical(0.5 * static_cast<double>(g.dims[0] - 1),
                                    0.5 * static_cast<double>(g.dims[1] - 1),
                                    0.5 * static_cast<double>(g.dims[2] - 1));
        vol_center = mid;
    }
    auto snap_to_voxel = [&](const Vec3& p) {
        const Vec3 c = g.continuous_index(p);
        Index3 v{};
        for (int a = 0; a < 3; ++a)
            v[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(c[a] + 0.5)), 0,
                                            g.dims[a] - 1);
        return v;
    };

    CaseKey key;
    key.id = case_id(role, index);
    key.role = role;
    Vec3 tc{};
    for (int a = 0; a < 3; ++a)
        tc[a] = vol_center[a] + uniform(rng, -prm.tumour_center_jitter_mm[a],
                                        prm.tumour_center_jitter_mm[a]);
    key.tumour_center_mm = g.physical(snap_to_voxel(tc));
    for (int a = 0; a < 3; ++a)
        key.tumour_radii_mm[a] =
            uniform(rng, prm.tumour_radius_min_mm[a], prm.tumour_radius_max_mm[a]);

    Vec3 peak{};
    for (int a = 0; a < 3; ++a) {
        const double lim = prm.peak_offset_fraction * key.tumour_radii_mm[a];
        peak[a] = key.tumour_center_mm[a] + uniform(rng, -lim, lim);
    }
    key.peak_voxel = snap_to_voxel(peak);
    const Vec3 peak_mm = g.physical(key.peak_voxel);

    const double rel_frac =
        uniform(rng, prm.relapse_radius_fraction_min, prm.relapse_radius_fraction_max);
    for (int a = 0; a < 3; ++a) key.relapse_radii_mm[a] = rel_frac * key.tumour_radii_mm[a];
    const double amp = uniform(rng, prm.uptake_peak_min, prm.uptake_peak_max);
    key.boundary_fraction = uniform(rng, prm.boundary_fraction_min, prm.boundary_fraction_max);
    key.suvmax = prm.background_suv + amp;

    // Gaussian widths that put the level set B + A g = f (B + A) on the relapse surface.
    const double g_b = (key.boundary_fraction * key.suvmax - prm.background_suv) / amp;
    const double level = std::sqrt(-2.0 * std::log(g_b));
    Vec3 sigma{};
    for (int a = 0; a < 3; ++a) sigma[a] = key.relapse_radii_mm[a] / level;

    const Vec3 brain_c{vol_center[0] + prm.brain_offset_mm[0], vol_center[1] + prm.brain_offset_mm[1],
                       vol_center[2] + prm.brain_offset_mm[2]};

    PatientCase pc;
    pc.id = key.id;
    pc.role = role;
    pc.ct = Volume3D(g, 0.0f);
    pc.gtv = Mask3D(g, 0);
    pc.brain = Mask3D(g, 0);
    Mask3D relapse(g, 0);

    for (std::size_t i = 0; i < g.voxel_count(); ++i) {
        const Vec3 p = g.physical(g.unravel(i));
        const bool body = detail::ellipsoid_q(p, vol_center, prm.body_radii_mm) <= 1.0;
        const bool brain = body && detail::ellipsoid_q(p, brain_c, prm.brain_radii_mm) <= 1.0;
        const bool tumour = detail::ellipsoid_q(p, key.tumour_center_mm, key.tumour_radii_mm) <= 1.0;
        const bool rel = detail::ellipsoid_q(p, peak_mm, key.relapse_radii_mm) <= 1.0;
        pc.gtv.data[i] = tumour;
        pc.brain.data[i] = brain;
        relapse.data[i] = rel;
        double hu = prm.ct_air_hu;
        if (body) hu = tumour ? prm.ct_tumour_hu : brain ? prm.ct_brain_hu : prm.ct_tissue_hu;
        if (prm.ct_noise_sd > 0.0) hu += prm.ct_noise_sd * normal(rng);
        pc.ct.data[i] = static_cast<float>(hu);
    }

    // PET on its own (possibly coarser) grid, covering the same field of view.
    Grid3D pg = g;
    if (prm.pet_downsample > 1) {
        const double f = prm.pet_downsample;
        for (int a = 0; a < 3; ++a) {
            pg.dims[a] = std::max<std::int64_t>(1, g.dims[a] / prm.pet_downsample);
            pg.spacing[a] = g.spacing[a] * f;
            pg.origin[a] = g.origin[a] + 0.5 * (f - 1.0) * g.spacing[a];
        }
    }
    pc.pet = Volume3D(pg, 0.0f);
    for (std::size_t i = 0; i < pg.voxel_count(); ++i) {
        const Vec3 p = pg.physical(pg.unravel(i));
        if (detail::ellipsoid_q(p, vol_center, prm.body_radii_mm) > 1.0) continue;
        double suv = prm.background_suv;
        double q = 0.0;
        for (int a = 0; a < 3; ++a) q += (p[a] - peak_mm[a]) * (p[a] - peak_mm[a]) / (sigma[a] * sigma[a]);
        suv += amp * std::exp(-0.5 * q);
        if (detail::ellipsoid_q(p, brain_c, prm.brain_radii_mm) <= 1.0) suv += prm.brain_suv;
        if (prm.pet_noise_sd > 0.0) suv += prm.pet_noise_sd * normal(rng);
        pc.pet.data[i] = static_cast<float>(suv);
    }

    if (count_foreground(pc.gtv) == 0 || count_foreground(relapse) == 0)
        throw GenerationError(key.id + ": phantom parameters produce an empty mask");
    if (role == CaseRole::RelapseTask) {
        key.points_of_origin = analysis::points_of_origin(relapse);
        pc.relapse = std::move(relapse);
    }
    pc.meta["generator"] = "phantom";
    pc.meta["boundary_fraction"] = std::to_string(key.boundary_fraction);
    return {std::move(pc), std::move(key)};
}

struct Cohort {
    std::vector<GeneratedCase> cases;  // relapse-task cases first, then pretrain-task cases
};

inline Cohort generate_cohort(const PhantomParams& prm, int n) {
    if (n < 1) throw ValidationError("generate_cohort: n must be >= 1");
    Cohort c;
    for (int i = 0; i < n; ++i) c.cases.push_back(generate_case(prm, i, CaseRole::RelapseTask));
    for (int i = 0; i < prm.n_pretrain; ++i)
        c.cases.push_back(generate_case(prm, i, CaseRole::PretrainTask));
    return c;
}

}  // namespace lrr::phantom
