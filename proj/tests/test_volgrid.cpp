#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lrr/volgrid.hpp"

using namespace lrr;

namespace {

Grid3D make_grid(std::int64_t nx, std::int64_t ny, std::int64_t nz, Vec3 spacing = {1, 1, 1},
                 Vec3 origin = {0, 0, 0}) {
    Grid3D g;
    g.dims = {nx, ny, nz};
    g.spacing = spacing;
    g.origin = origin;
    return g;
}

Volume3D random_volume(const Grid3D& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-5.0f, 5.0f);
    Volume3D v(g);
    for (auto& x : v.data) x = u(rng);
    return v;
}

}  // namespace

TEST(Grid3D, LinearIndexIsXFastest) {
    const auto g = make_grid(4, 3, 2);
    EXPECT_EQ(g.linear(1, 0, 0), 1u);
    EXPECT_EQ(g.linear(0, 1, 0), 4u);
    EXPECT_EQ(g.linear(0, 0, 1), 12u);
    for (std::size_t i = 0; i < g.voxel_count(); ++i) EXPECT_EQ(g.linear(g.unravel(i)), i);
}

TEST(Grid3D, PhysicalPositionUsesDirectionAndSpacing) {
    auto g = make_grid(5, 5, 5, {2, 3, 4}, {10, 20, 30});
    g.direction = {0, -1, 0, 1, 0, 0, 0, 0, 1};  // 90 degree rotation about z
    const Vec3 p = g.physical(Index3{1, 2, 3});
    EXPECT_DOUBLE_EQ(p[0], 10 - 6);
    EXPECT_DOUBLE_EQ(p[1], 20 + 2);
    EXPECT_DOUBLE_EQ(p[2], 30 + 12);
    const Vec3 c = g.continuous_index(p);
    EXPECT_NEAR(c[0], 1, 1e-12);
    EXPECT_NEAR(c[1], 2, 1e-12);
    EXPECT_NEAR(c[2], 3, 1e-12);
}

TEST(Grid3D, ValidateRejectsBadGeometry) {
    auto g = make_grid(2, 2, 2);
    EXPECT_NO_THROW(g.validate());
    g.direction = {1, 0.1, 0, 0, 1, 0, 0, 0, 1};
    EXPECT_THROW(g.validate(), GeometryError);
    g = make_grid(0, 2, 2);
    EXPECT_THROW(g.validate(), GeometryError);
    g = make_grid(2, 2, 2, {1, 0, 1});
    EXPECT_THROW(g.validate(), GeometryError);
}

TEST(ResampleLinear, ConstantVolumeStaysConstant) {
    const auto src = Volume3D(make_grid(6, 5, 4, {2, 2, 3}), 7.0f);
    const auto target = make_grid(7, 6, 5, {1.3, 1.1, 2.0}, {0.5, 0.25, 0.1});
    const auto out = resample_linear(src, target, -99.0f);
    for (float v : out.data) EXPECT_FLOAT_EQ(v, 7.0f);
}

TEST(ResampleLinear, IdentityGridIsBitwiseCopy) {
    const auto src = random_volume(make_grid(5, 4, 3, {0.9765, 0.9765, 2.0}), 1);
    const auto out = resample_linear(src, src.grid, 0.0f);
    EXPECT_EQ(out.data, src.data);
}

TEST(ResampleLinear, MidpointOfVoxelPair) {
    Volume3D src(make_grid(2, 1, 1, {4, 1, 1}), std::vector<float>{0.0f, 2.0f});
    const auto target = make_grid(1, 1, 1, {1, 1, 1}, {2.0, 0, 0});
    EXPECT_FLOAT_EQ(resample_linear(src, target, -1.0f).data[0], 1.0f);
}

TEST(ResampleLinear, OutsideTakesFill) {
    const auto src = Volume3D(make_grid(3, 3, 3), 1.0f);
    const auto target = make_grid(2, 1, 1, {1, 1, 1}, {2.0, 0, 0});
    const auto out = resample_linear(src, target, -5.0f);
    EXPECT_FLOAT_EQ(out.data[0], 1.0f);
    EXPECT_FLOAT_EQ(out.data[1], -5.0f);
}

TEST(ResampleLinear, MatchesHandTrilinearWeights) {
    const auto src = random_volume(make_grid(3, 3, 3), 3);
    const auto target = make_grid(1, 1, 1, {1, 1, 1}, {0.25, 1.5, 0.75});
    double expect = 0.0;
    const double fx = 0.25, fy = 0.5, fz = 0.75;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
                expect += (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz) *
                          src.at(dx, 1 + dy, dz);
    EXPECT_NEAR(resample_linear(src, target, 0.0f).data[0], expect, 1e-5);
}

TEST(ResampleLinear, ConvexCombinationBounds) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto src = random_volume(make_grid(4, 5, 3, {1.5, 1.2, 2.5}), s);
        const auto target = make_grid(6, 6, 6, {0.9, 1.1, 1.3}, {-0.7, 0.4, 0.2});
        const float fill = 0.0f;
        const auto [mn, mx] = std::minmax_element(src.data.begin(), src.data.end());
        for (float v : resample_linear(src, target, fill).data) {
            EXPECT_GE(v, std::min(*mn, fill) - 1e-5f);
            EXPECT_LE(v, std::max(*mx, fill) + 1e-5f);
        }
    }
}

TEST(ResampleLinear, RejectsNonOrthonormalDirection) {
    const auto src = Volume3D(make_grid(2, 2, 2), 1.0f);
    auto target = make_grid(2, 2, 2);
    target.direction = {2, 0, 0, 0, 1, 0, 0, 0, 1};
    EXPECT_THROW(resample_linear(src, target, 0.0f), GeometryError);
}

TEST(ResampleNearestMask, IdentityAndInterior) {
    Mask3D m(make_grid(4, 4, 4), 0);
    m.at(1, 2, 3) = 1;
    EXPECT_EQ(resample_nearest_mask(m, m.grid).data, m.data);

    const Mask3D ones(make_grid(5, 5, 5, {2, 2, 2}), 1);
    const auto inner = resample_nearest_mask(ones, make_grid(6, 6, 6, {1, 1, 1}, {1, 1, 1}));
    EXPECT_EQ(count_foreground(inner), inner.data.size());
}

TEST(ResampleNearestMask, SingleVoxelAtDoubleResolution) {
    Mask3D m(make_grid(3, 3, 3, {2, 2, 2}), 0);
    m.at(1, 1, 1) = 1;
    // Half spacing, origin shifted so target voxels tile each source voxel 2x2x2.
    const auto target = make_grid(6, 6, 6, {1, 1, 1}, {-0.5, -0.5, -0.5});
    const auto out = resample_nearest_mask(m, target);
    // Oracle: nearest source index per target voxel.
    std::size_t expected = 0;
    for (std::int64_t k = 0; k < 6; ++k)
        for (std::int64_t j = 0; j < 6; ++j)
            for (std::int64_t i = 0; i < 6; ++i) {
                const bool in = (i == 2 || i == 3) && (j == 2 || j == 3) && (k == 2 || k == 3);
                EXPECT_EQ(out.at(i, j, k), in ? 1 : 0);
                expected += in;
            }
    EXPECT_EQ(count_foreground(out), 8u);
    EXPECT_EQ(expected, 8u);
}

TEST(CropCentered, OwnDimsAboutCenterIsIdentity) {
    const auto v = random_volume(make_grid(5, 6, 7), 4);
    const auto c = crop_centered(v, Index3{2, 3, 3}, v.grid.dims, -1.0f);
    EXPECT_EQ(c.data, v.data);
    EXPECT_TRUE(c.grid.same_as(v.grid));
}

TEST(CropCentered, SingleVoxelAtOrigin) {
    const auto v = random_volume(make_grid(4, 4, 4), 5);
    const auto c = crop_centered(v, Index3{0, 0, 0}, {1, 1, 1}, -1.0f);
    ASSERT_EQ(c.data.size(), 1u);
    EXPECT_EQ(c.data[0], v.at(0, 0, 0));
}

TEST(CropCentered, CornerCropFillsOutside) {
    const Volume3D v(make_grid(6, 6, 6), 5.0f);
    const auto c = crop_centered(v, Index3{0, 0, 0}, {4, 4, 4}, -1.0f);
    int fives = 0, fills = 0;
    for (std::int64_t k = 0; k < 4; ++k)
        for (std::int64_t j = 0; j < 4; ++j)
            for (std::int64_t i = 0; i < 4; ++i) {
                const bool in = i >= 2 && j >= 2 && k >= 2;
                EXPECT_EQ(c.at(i, j, k), in ? 5.0f : -1.0f);
                (in ? fives : fills)++;
            }
    EXPECT_EQ(fives, 8);
    EXPECT_EQ(fills, 56);
}

TEST(CropCentered, PreservesPhysicalPositions) {
    const auto v = random_volume(make_grid(8, 8, 8, {2, 1.5, 3}, {5, -3, 7}), 6);
    const Index3 ctr{4, 3, 5};
    const auto c = crop_centered(v, ctr, {3, 4, 5}, 0.0f);
    for (std::int64_t k = 0; k < 5; ++k)
        for (std::int64_t j = 0; j < 4; ++j)
            for (std::int64_t i = 0; i < 3; ++i) {
                const Index3 src{ctr[0] - 1 + i, ctr[1] - 2 + j, ctr[2] - 2 + k};
                const auto pc = c.grid.physical(Index3{i, j, k});
                const auto ps = v.grid.physical(src);
                for (int a = 0; a < 3; ++a) EXPECT_NEAR(pc[a], ps[a], 1e-9);
                EXPECT_EQ(c.at(i, j, k), v.at(src));
            }
    // The center lands on floor(dims/2).
    EXPECT_EQ(c.at(1, 2, 2), v.at(ctr));
}

TEST(CropCentered, CropThenUncropRestoresOverlap) {
    const auto v = random_volume(make_grid(9, 7, 6), 7);
    const Index3 ctr{7, 1, 3};
    const auto c = crop_centered(v, ctr, {6, 6, 4}, 0.0f);
    const auto back = uncrop_centered(c, v.grid, ctr, -100.0f);
    for (std::int64_t k = 0; k < 6; ++k)
        for (std::int64_t j = 0; j < 7; ++j)
            for (std::int64_t i = 0; i < 9; ++i) {
                const bool in = i >= 4 && i < 10 && j >= -2 && j < 4 && k >= 1 && k < 5;
                EXPECT_EQ(back.at(i, j, k), in ? v.at(i, j, k) : -100.0f);
            }
}

TEST(FlipX, InvolutionAndPair) {
    Volume3D pair(make_grid(2, 1, 1), std::vector<float>{1.0f, 2.0f});
    EXPECT_EQ(flip_x(pair).data, (std::vector<float>{2.0f, 1.0f}));
    const auto v = random_volume(make_grid(5, 3, 4), 8);
    EXPECT_EQ(flip_x(flip_x(v)).data, v.data);
    EXPECT_TRUE(flip_x(v).grid.same_as(v.grid));
    auto sorted_a = v.data, sorted_b = flip_x(v).data;
    std::sort(sorted_a.begin(), sorted_a.end());
    std::sort(sorted_b.begin(), sorted_b.end());
    EXPECT_EQ(sorted_a, sorted_b);
}

TEST(FlipX, SymmetricVolumeUnchanged) {
    Volume3D v(make_grid(4, 2, 2));
    for (std::int64_t k = 0; k < 2; ++k)
        for (std::int64_t j = 0; j < 2; ++j)
            for (std::int64_t i = 0; i < 4; ++i)
                v.at(i, j, k) = static_cast<float>(std::min(i, 3 - i) + 10 * j + 100 * k);
    EXPECT_EQ(flip_x(v).data, v.data);
}

TEST(VoxelVolume, Examples) {
    EXPECT_DOUBLE_EQ(voxel_volume_cc(make_grid(1, 1, 1)), 0.001);
    EXPECT_DOUBLE_EQ(voxel_volume_cc(make_grid(1, 1, 1, {10, 10, 10})), 1.0);
    EXPECT_NEAR(voxel_volume_cc(make_grid(1, 1, 1, {0.9765, 0.9765, 2.0})), 0.0019071045, 1e-12);
}

TEST(VoxelVolume, CountTimesVoxelVolumeEqualsSum) {
    std::mt19937_64 rng(9);
    Mask3D m(make_grid(6, 5, 4, {0.9765, 0.9765, 2.0}), 0);
    for (auto& x : m.data) x = rng() % 3 == 0;
    double brute = 0.0;
    for (auto x : m.data)
        if (x) brute += 0.9765 * 0.9765 * 2.0 / 1000.0;
    EXPECT_NEAR(count_foreground(m) * voxel_volume_cc(m.grid), brute, 1e-12);
}
