#pragma once

// VF32 volume files: `<stem>.vf32` holds raw little-endian float32 values in x-fastest
// order, `<stem>.json` holds the geometry sidecar and the volume kind.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrr/error.hpp"
#include "lrr/volgrid.hpp"

namespace lrr::io {

namespace fs = std::filesystem;
using nlohmann::json;

enum class VolumeKind { Ct, Pet, Mask, Prob };

inline std::string to_string(VolumeKind k) {
    switch (k) {
        case VolumeKind::Ct: return "ct";
        case VolumeKind::Pet: return "pet";
        case VolumeKind::Mask: return "mask";
        case VolumeKind::Prob: return "prob";
    }
    return "ct";
}

inline VolumeKind parse_kind(const std::string& s, const std::string& path) {
    if (s == "ct") return VolumeKind::Ct;
    if (s == "pet") return VolumeKind::Pet;
    if (s == "mask") return VolumeKind::Mask;
    if (s == "prob") return VolumeKind::Prob;
    throw IoError(path, "unknown volume kind '" + s + "'");
}

/// Strips a trailing .vf32 or .json so either file of the pair can be named.
inline fs::path stem_of(const fs::path& p) {
    const auto ext = p.extension();
    if (ext == ".vf32" || ext == ".json") return p.parent_path() / p.stem();
    return p;
}

inline json grid_to_json(const Grid3D& g) {
    return json{{"dims", g.dims},
                {"spacing_mm", g.spacing},
                {"origin_mm", g.origin},
                {"direction", g.direction}};
}

inline Grid3D grid_from_json(const json& j, const std::string& path) {
    try {
        Grid3D g;
        g.dims = j.at("dims").get<std::array<std::int64_t, 3>>();
        g.spacing = j.at("spacing_mm").get<Vec3>();
        g.origin = j.at("origin_mm").get<Vec3>();
        if (j.contains("direction")) g.direction = j.at("direction").get<Mat3>();
        g.validate();
        return g;
    } catch (const json::exception& e) {
        throw IoError(path, std::string("bad geometry header: ") + e.what());
    } catch (const GeometryError& e) {
        throw IoError(path, e.what());
    }
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path.string(), std::string("invalid JSON: ") + e.what());
    }
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    out << text;
    if (!out) throw IoError(path.string(), "write failed");
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    return v;
}

}  // namespace detail

inline void write_vf32(const fs::path& stem_in, const Grid3D& grid, std::span<const float> data,
                       VolumeKind kind) {
    const fs::path stem = stem_of(stem_in);
    if (data.size() != grid.voxel_count())
        throw ValidationError("write_vf32: data length does not match grid");
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());

    std::vector<std::uint32_t> raw(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        raw[i] = detail::to_little(std::bit_cast<std::uint32_t>(data[i]));
    const fs::path bin = fs::path(stem.string() + ".vf32");
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw IoError(bin.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
    if (!out) throw IoError(bin.string(), "write failed");

    json side = grid_to_json(grid);
    side["kind"] = to_string(kind);
    write_json(fs::path(stem.string() + ".json"), side);
}

inline void write_volume(const fs::path& stem, const Volume3D& v, VolumeKind kind) {
    write_vf32(stem, v.grid, v.data, kind);
}

inline void write_mask(const fs::path& stem, const Mask3D& m) {
    std::vector<float> f(m.data.begin(), m.data.end());
    write_vf32(stem, m.grid, f, VolumeKind::Mask);
}

struct RawVolume {
    Volume3D volume;
    VolumeKind kind;
};

inline RawVolume read_vf32(const fs::path& stem_in) {
    const fs::path stem = stem_of(stem_in);
    const fs::path side_path = fs::path(stem.string() + ".json");
    const json side = read_json(side_path);
    const Grid3D grid = grid_from_json(side, side_path.string());
    VolumeKind kind = VolumeKind::Ct;
    try {
        kind = parse_kind(side.at("kind").get<std::string>(), side_path.string());
    } catch (const json::exception&) {
        throw IoError(side_path.string(), "missing 'kind'");
    }

    const fs::path bin = fs::path(stem.string() + ".vf32");
    std::ifstream in(bin, std::ios::binary);
    if (!in) throw IoError(bin.string(), "cannot open");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != grid.voxel_count() * sizeof(float))
        throw IoError(bin.string(), "size " + std::to_string(bytes) + " bytes, expected " +
                                        std::to_string(grid.voxel_count() * sizeof(float)));
    in.seekg(0);
    std::vector<std::uint32_t> raw(grid.voxel_count());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError(bin.string(), "read failed");

    std::vector<float> data(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i)
        data[i] = std::bit_cast<float>(detail::to_little(raw[i]));
    try {
        require_finite(data, "vf32");
    } catch (const ValidationError&) {
        throw IoError(bin.string(), "contains non-finite values");
    }
    return {Volume3D(grid, std::move(data)), kind};
}

inline Volume3D read_volume(const fs::path& stem) { return read_vf32(stem).volume; }

inline Mask3D read_mask(const fs::path& stem) {
    auto raw = read_vf32(stem);
    Mask3D m(raw.volume.grid, 0);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const float v = raw.volume.data[i];
        if (v != 0.0f && v != 1.0f)
            throw IoError(stem_of(stem).string() + ".vf32", "mask value outside {0,1}");
        m.data[i] = v == 1.0f ? 1 : 0;
    }
    return m;
}

}  // namespace lrr::io
