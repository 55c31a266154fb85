#include <gtest/gtest.h>

#include <chrono>

#include "lrr/baselines.hpp"
#include "lrr/phantom.hpp"

using namespace lrr;
using namespace lrr::phantom;

namespace {

PhantomParams noiseless() {
    PhantomParams p;
    p.pet_noise_sd = 0.0;
    p.ct_noise_sd = 0.0;
    return p;
}

}  // namespace

TEST(Phantom, DeterministicPerSeedAndIndex) {
    const PhantomParams p;
    const auto a = generate_case(p, 3), b = generate_case(p, 3);
    EXPECT_EQ(a.patient.ct.data, b.patient.ct.data);
    EXPECT_EQ(a.patient.pet.data, b.patient.pet.data);
    EXPECT_EQ(a.patient.gtv.data, b.patient.gtv.data);
    EXPECT_EQ(a.patient.relapse->data, b.patient.relapse->data);
    EXPECT_EQ(to_json(a.key), to_json(b.key));

    const auto c = generate_case(p, 4);
    EXPECT_NE(a.patient.pet.data, c.patient.pet.data);
    PhantomParams q = p;
    q.seed = 2;
    EXPECT_NE(a.patient.pet.data, generate_case(q, 3).patient.pet.data);
}

TEST(Phantom, PetArgmaxIsThePeakVoxelWithoutNoise) {
    const auto prm = noiseless();
    for (int i = 0; i < 8; ++i) {
        const auto g = generate_case(prm, i);
        const auto& pet = g.patient.pet;
        // The brain adds a plateau of its own, so look inside the GTV.
        std::size_t arg = 0;
        float best = -1.0f;
        for (std::size_t v = 0; v < pet.data.size(); ++v)
            if (g.patient.gtv.data[v] && pet.data[v] > best) {
                best = pet.data[v];
                arg = v;
            }
        EXPECT_EQ(pet.grid.unravel(arg), g.key.peak_voxel) << g.key.id;
        EXPECT_NEAR(best, g.key.suvmax, 1e-5);
        EXPECT_TRUE(g.patient.gtv.at(g.key.peak_voxel));
    }
}

TEST(Phantom, CentredHalfSizeRelapseFillsAnEighthOfTheGtv) {
    PhantomParams prm = noiseless();
    prm.peak_offset_fraction = 0.0;
    prm.relapse_radius_fraction_min = prm.relapse_radius_fraction_max = 0.5;
    prm.tumour_radius_min_mm = prm.tumour_radius_max_mm = {16.0, 16.0, 16.0};
    for (int i = 0; i < 4; ++i) {
        const auto g = generate_case(prm, i);
        const auto& gtv = g.patient.gtv;
        const auto& rel = *g.patient.relapse;
        for (std::size_t v = 0; v < rel.data.size(); ++v)
            if (rel.data[v]) ASSERT_TRUE(gtv.data[v]);
        const double ratio =
            static_cast<double>(count_foreground(rel)) / static_cast<double>(count_foreground(gtv));
        EXPECT_NEAR(ratio, 0.125, 0.02);
    }
}

TEST(Phantom, BoundaryFractionThresholdReproducesTheRelapse) {
    const auto prm = noiseless();
    for (int i = 0; i < 8; ++i) {
        const auto g = generate_case(prm, i);
        const auto c = ingest_case(g.patient);
        const int percent = static_cast<int>(std::lround(g.key.boundary_fraction * 100.0));
        const double thr = g.key.boundary_fraction * baselines::suvmax_of_gtv(c.pet, c.gtv);
        Mask3D exact(c.pet.grid, 0);
        for (std::size_t v = 0; v < exact.data.size(); ++v)
            exact.data[v] = c.pet.data[v] >= thr && !c.brain.data[v];
        // At the exact fraction the mask differs from the relapse only by float rounding on
        // the surface; at the rounded percent it stays within a one-voxel band.
        const auto& rel = *c.relapse;
        std::size_t diff = 0;
        for (std::size_t v = 0; v < rel.data.size(); ++v) diff += exact.data[v] != rel.data[v];
        EXPECT_LE(diff, count_foreground(rel) / 20 + 2) << g.key.id;

        const auto m = baselines::suvmax_threshold_predict(c.pet, c.gtv, c.brain, percent);
        for (std::size_t v = 0; v < m.data.size(); ++v) {
            if (m.data[v] == rel.data[v]) continue;
            // Every disagreement touches a voxel of the other label.
            const Index3 p = m.grid.unravel(v);
            bool near_surface = false;
            for (std::int64_t dz = -1; dz <= 1; ++dz)
                for (std::int64_t dy = -1; dy <= 1; ++dy)
                    for (std::int64_t dx = -1; dx <= 1; ++dx) {
                        const Index3 q{p[0] + dx, p[1] + dy, p[2] + dz};
                        if (m.grid.contains(q) && rel.at(q) != rel.data[v]) near_surface = true;
                    }
            EXPECT_TRUE(near_surface) << g.key.id << " voxel " << v;
        }
    }
}

TEST(Phantom, GtvCentroidLiesInsideGtv) {
    const PhantomParams prm;
    for (int i = 0; i < 20; ++i) {
        const auto g = generate_case(prm, i);
        EXPECT_TRUE(g.patient.gtv.at(mask_centroid_voxel(g.patient.gtv)));
    }
}

TEST(Phantom, MasksAreNonEmptyAndPointsOfOriginSitInTheRelapse) {
    const PhantomParams prm;
    for (int i = 0; i < 20; ++i) {
        const auto g = generate_case(prm, i);
        EXPECT_GT(count_foreground(g.patient.gtv), 0u);
        EXPECT_GT(count_foreground(*g.patient.relapse), 0u);
        EXPECT_GT(count_foreground(g.patient.brain), 0u);
        ASSERT_FALSE(g.key.points_of_origin.empty());
        for (const auto& po : g.key.points_of_origin) EXPECT_TRUE(g.patient.relapse->at(po.voxel));
        EXPECT_GE(g.key.boundary_fraction, prm.boundary_fraction_min);
        EXPECT_LE(g.key.boundary_fraction, prm.boundary_fraction_max);
    }
}

TEST(Phantom, PretrainCasesHaveNoRelapse) {
    const auto g = generate_case(PhantomParams{}, 0, CaseRole::PretrainTask);
    EXPECT_EQ(g.key.id, "pre_000");
    EXPECT_FALSE(g.patient.relapse.has_value());
    EXPECT_TRUE(g.key.points_of_origin.empty());
    EXPECT_EQ(g.patient.role, CaseRole::PretrainTask);
    EXPECT_NE(g.patient.pet.data, generate_case(PhantomParams{}, 0).patient.pet.data);
}

TEST(Phantom, CohortLayoutAndSpeed) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = generate_cohort(PhantomParams{}, 40);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ASSERT_EQ(c.cases.size(), 52u);
    EXPECT_EQ(c.cases[0].key.id, "case_000");
    EXPECT_EQ(c.cases[39].key.id, "case_039");
    EXPECT_EQ(c.cases[40].key.id, "pre_000");
    EXPECT_LT(secs, 60.0);
    EXPECT_THROW(generate_cohort(PhantomParams{}, 0), ValidationError);
}

TEST(Phantom, CtTissueValues) {
    const auto g = generate_case(noiseless(), 0);
    const auto& ct = g.patient.ct;
    EXPECT_EQ(ct.at(0, 0, 0), -1000.0f);  // corner is outside the body
    EXPECT_EQ(ct.at(mask_centroid_voxel(g.patient.gtv)), 70.0f);
}

TEST(Phantom, DownsampledPetGrid) {
    PhantomParams prm;
    prm.pet_downsample = 2;
    const auto g = generate_case(prm, 0);
    const auto& pg = g.patient.pet.grid;
    EXPECT_EQ(pg.dims, (std::array<std::int64_t, 3>{24, 24, 20}));
    EXPECT_EQ(pg.spacing, (Vec3{4.0, 4.0, 4.0}));
    EXPECT_EQ(pg.origin, (Vec3{1.0, 1.0, 1.0}));
    const auto c = ingest_case(g.patient);
    EXPECT_TRUE(c.pet.grid.same_as(c.ct.grid));
}

TEST(Phantom, ParamsJsonRoundTrip) {
    PhantomParams p;
    p.dims = {32, 40, 24};
    p.boundary_fraction_min = 0.3;
    p.seed = 77;
    p.pet_noise_sd = 0.0;
    const auto back = params_from_json(to_json(p));
    EXPECT_EQ(to_json(back), to_json(p));
    // Missing keys keep their defaults.
    EXPECT_EQ(to_json(params_from_json(json::object())), to_json(PhantomParams{}));
}

TEST(Phantom, ValidationErrors) {
    PhantomParams p;
    p.boundary_fraction_min = 0.1;  // below background / SUVmax for the weakest uptake
    EXPECT_THROW(p.validate(), ValidationError);
    p = PhantomParams{};
    p.tumour_radius_min_mm[0] = 20.0;
    EXPECT_THROW(p.validate(), ValidationError);
    p = PhantomParams{};
    p.pet_downsample = 0;
    EXPECT_THROW(p.validate(), ValidationError);
    p = PhantomParams{};
    p.spacing[1] = 0.0;
    EXPECT_THROW(generate_case(p, 0), GeometryError);
}

TEST(Phantom, AnswerKeyJson) {
    const auto g = generate_case(PhantomParams{}, 5);
    const auto j = to_json(g.key);
    EXPECT_EQ(j["id"], "case_005");
    EXPECT_EQ(j["role"], "relapse-task");
    EXPECT_EQ(j["boundary_percent"], std::lround(g.key.boundary_fraction * 100.0));
    EXPECT_EQ(j["points_of_origin"].size(), g.key.points_of_origin.size());
    EXPECT_EQ(j["peak_voxel"].get<Index3>(), g.key.peak_voxel);
}

TEST(Phantom, CaseIds) {
    EXPECT_EQ(case_id(CaseRole::RelapseTask, 7), "case_007");
    EXPECT_EQ(case_id(CaseRole::PretrainTask, 12), "pre_012");
}
