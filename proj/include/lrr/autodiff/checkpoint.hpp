#pragma once

// Weight checkpoints: `<stem>.bin` is every parameter as little-endian float64, concatenated
// in declaration order; `<stem>.json` lists name, shape and byte offset of each tensor.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lrr/autodiff/params.hpp"
#include "lrr/vf32.hpp"

namespace lrr::ad {

namespace fs = std::filesystem;

inline constexpr const char* kCheckpointFormat = "lrr-weights-f64le-v1";

inline fs::path checkpoint_stem(const fs::path& p) {
    const auto ext = p.extension();
    if (ext == ".bin" || ext == ".json") return p.parent_path() / p.stem();
    return p;
}

template <class T>
void save_checkpoint(const fs::path& stem_in, const ParamSet<T>& params,
                     const nlohmann::json& extra = nlohmann::json::object()) {
    const fs::path stem = checkpoint_stem(stem_in);
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    nlohmann::json header;
    header["format"] = kCheckpointFormat;
    header["params"] = nlohmann::json::array();
    std::vector<std::uint64_t> raw;
    std::uint64_t offset = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& t = params.tensors[p];
        header["params"].push_back({{"name", params.names[p]},
                                    {"shape", t.shape},
                                    {"offset", offset},
                                    {"bytes", t.data.size() * 8}});
        for (T v : t.data) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(static_cast<double>(v));
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            raw.push_back(bits);
        }
        offset += t.data.size() * 8;
    }
    header["total_bytes"] = offset;
    if (!extra.empty()) header["meta"] = extra;

    const fs::path bin = fs::path(stem.string() + ".bin");
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw IoError(bin.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size() * 8));
    if (!out) throw IoError(bin.string(), "write failed");
    io::write_json(fs::path(stem.string() + ".json"), header);
}

struct CheckpointData {
    ParamSet<double> params;
    nlohmann::json meta;
};

inline CheckpointData load_checkpoint(const fs::path& stem_in) {
    const fs::path stem = checkpoint_stem(stem_in);
    const fs::path hdr_path = fs::path(stem.string() + ".json");
    const auto header = io::read_json(hdr_path);
    if (header.value("format", "") != kCheckpointFormat)
        throw IoError(hdr_path.string(), "not a weight checkpoint header");

    const fs::path bin = fs::path(stem.string() + ".bin");
    std::ifstream in(bin, std::ios::binary);
    if (!in) throw IoError(bin.string(), "cannot open");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(in.tellg());
    if (bytes != header.at("total_bytes").get<std::uint64_t>())
        throw IoError(bin.string(), "size does not match header");
    in.seekg(0);

    CheckpointData out;
    for (const auto& p : header.at("params")) {
        Shape shape = p.at("shape").get<Shape>();
        const auto off = p.at("offset").get<std::uint64_t>();
        const auto n = static_cast<std::size_t>(numel(shape));
        if (p.at("bytes").get<std::uint64_t>() != n * 8 || off + n * 8 > bytes)
            throw IoError(bin.string(), "inconsistent entry for " + p.at("name").get<std::string>());
        std::vector<std::uint64_t> raw(n);
        in.seekg(static_cast<std::streamoff>(off));
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 8));
        if (!in) throw IoError(bin.string(), "read failed");
        std::vector<double> vals(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = raw[i];
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            vals[i] = std::bit_cast<double>(bits);
        }
        out.params.add(p.at("name").get<std::string>(), Tensor<double>(shape, std::move(vals)));
    }
    out.meta = header.value("meta", nlohmann::json::object());
    return out;
}

/// Copies checkpoint values into an existing parameter set, checking names and shapes.
template <class T>
void assign_from(ParamSet<T>& dst, const ParamSet<double>& src) {
    if (dst.size() != src.size())
        throw ValidationError("checkpoint has " + std::to_string(src.size()) +
                              " tensors, model expects " + std::to_string(dst.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst.names[i] != src.names[i] || dst.tensors[i].shape != src.tensors[i].shape)
            throw ValidationError("checkpoint tensor '" + src.names[i] +
                                  "' does not match model tensor '" + dst.names[i] + "'");
        for (std::size_t j = 0; j < dst.tensors[i].data.size(); ++j)
            dst.tensors[i].data[j] = static_cast<T>(src.tensors[i].data[j]);
    }
}

}  // namespace lrr::ad
