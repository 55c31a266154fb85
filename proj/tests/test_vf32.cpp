#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "lrr/vf32.hpp"

using namespace lrr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("lrr_vf32_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Grid3D grid() {
    Grid3D g;
    g.dims = {3, 2, 2};
    g.spacing = {0.9765, 0.9765, 2.0};
    g.origin = {-10.5, 3.25, 7.0};
    g.direction = {0, 1, 0, -1, 0, 0, 0, 0, 1};
    return g;
}

}  // namespace

TEST(Vf32, VolumeRoundTripIsExact) {
    const auto dir = scratch("roundtrip");
    Volume3D v(grid());
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = 0.1f * static_cast<float>(i) - 3.3f;
    io::write_volume(dir / "a", v, io::VolumeKind::Pet);
    const auto r = io::read_vf32(dir / "a.vf32");
    EXPECT_EQ(r.kind, io::VolumeKind::Pet);
    EXPECT_EQ(r.volume.data, v.data);
    EXPECT_TRUE(r.volume.grid.same_as(v.grid, 0.0));
    EXPECT_EQ(fs::file_size(dir / "a.vf32"), v.data.size() * 4);
}

TEST(Vf32, SidecarKeys) {
    const auto dir = scratch("sidecar");
    io::write_volume(dir / "b", Volume3D(grid(), 1.0f), io::VolumeKind::Ct);
    const auto j = io::read_json(dir / "b.json");
    for (const char* k : {"dims", "spacing_mm", "origin_mm", "direction", "kind"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["direction"].size(), 9u);
    EXPECT_EQ(j["kind"], "ct");
}

TEST(Vf32, LittleEndianLayout) {
    const auto dir = scratch("endian");
    Grid3D g;
    g.dims = {2, 1, 1};
    io::write_volume(dir / "c", Volume3D(g, std::vector<float>{1.0f, -2.0f}), io::VolumeKind::Prob);
    std::ifstream in(dir / "c.vf32", std::ios::binary);
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    // 1.0f = 0x3f800000, -2.0f = 0xc0000000, least significant byte first.
    EXPECT_EQ(b[0], 0x00);
    EXPECT_EQ(b[3], 0x3f);
    EXPECT_EQ(b[2], 0x80);
    EXPECT_EQ(b[7], 0xc0);
}

TEST(Vf32, MaskRoundTripAndValidation) {
    const auto dir = scratch("mask");
    Mask3D m(grid(), 0);
    m.data[3] = m.data[7] = 1;
    io::write_mask(dir / "m", m);
    EXPECT_EQ(io::read_mask(dir / "m").data, m.data);

    Volume3D bad(grid(), 0.0f);
    bad.data[0] = 0.5f;
    io::write_volume(dir / "bad", bad, io::VolumeKind::Mask);
    EXPECT_THROW(io::read_mask(dir / "bad"), IoError);
}

TEST(Vf32, ErrorsCarryPath) {
    const auto dir = scratch("errors");
    try {
        io::read_volume(dir / "missing");
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(e.path().find("missing"), std::string::npos);
    }
    io::write_volume(dir / "short", Volume3D(grid(), 1.0f), io::VolumeKind::Ct);
    fs::resize_file(dir / "short.vf32", 8);
    EXPECT_THROW(io::read_volume(dir / "short"), IoError);

    io::write_text(dir / "kind.json", R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],)"
                                      R"("direction":[1,0,0,0,1,0,0,0,1],"kind":"xray"})");
    io::write_text(dir / "kind.vf32", std::string(4, '\0'));
    EXPECT_THROW(io::read_volume(dir / "kind"), IoError);
}

TEST(Vf32, NonFiniteRejectedOnLoad) {
    const auto dir = scratch("nan");
    Grid3D g;
    g.dims = {1, 1, 1};
    const float nan = std::numeric_limits<float>::quiet_NaN();
    io::write_vf32(dir / "n", g, std::vector<float>{nan}, io::VolumeKind::Pet);
    EXPECT_THROW(io::read_volume(dir / "n"), IoError);
}
