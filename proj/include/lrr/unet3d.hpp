#pragma once

// 3D U-Net: per level two (conv3x3x3 -> instance norm -> ReLU) units, max-pool down,
// transposed-conv up, skip concatenation, 1x1x1 head and sigmoid.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lrr/autodiff/ops.hpp"
#include "lrr/autodiff/params.hpp"
#include "lrr/rng.hpp"

namespace lrr {

struct UNetConfig {
    int in_channels = 2;
    int out_channels = 1;
    int levels = 3;
    int base_channels = 8;

    static UNetConfig desk() { return {2, 1, 3, 8}; }
    static UNetConfig clinical() { return {2, 1, 4, 32}; }

    static UNetConfig preset(const std::string& name) {
        if (name == "desk") return desk();
        if (name == "clinical") return clinical();
        throw ValidationError("unknown network preset '" + name + "' (expected desk|clinical)");
    }

    int channels(int level) const { return base_channels << level; }
    std::int64_t divisor() const { return std::int64_t{1} << (levels - 1); }

    void validate() const {
        if (levels < 2) throw ValidationError("UNetConfig: levels must be >= 2");
        if (base_channels < 1 || in_channels < 1 || out_channels < 1)
            throw ValidationError("UNetConfig: channel counts must be >= 1");
    }
};

template <class T>
struct UNet {
    UNetConfig cfg;
    ad::ParamSet<T> params;

    std::int64_t parameter_count() const { return params.element_count(); }
};

namespace detail {

template <class T>
void add_conv(ad::ParamSet<T>& p, const std::string& name, std::int64_t cin, std::int64_t cout,
              std::int64_t k) {
    p.add(name + ".weight", ad::Tensor<T>({cout, cin, k, k, k}));
    p.add(name + ".bias", ad::Tensor<T>({cout}));
}

template <class T>
void add_unit(ad::ParamSet<T>& p, const std::string& name, std::int64_t cin, std::int64_t cout) {
    add_conv(p, name + ".conv", cin, cout, 3);
    p.add(name + ".norm.gamma", ad::Tensor<T>({cout}, T{1}));
    p.add(name + ".norm.beta", ad::Tensor<T>({cout}));
}

}  // namespace detail

/// He-initialised U-Net: conv weights ~ N(0, 2/fan_in), biases 0, gamma 1, beta 0.
/// fan_in is Cin*kd*kh*kw for convolutions and Cin for the 2x2x2 stride-2 up-convolutions
/// (each output voxel sees exactly one tap per input channel).
template <class T>
UNet<T> build_unet(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    UNet<T> net;
    net.cfg = cfg;
    auto& p = net.params;
    std::int64_t prev = cfg.in_channels;
    for (int l = 0; l < cfg.levels; ++l) {
        const std::string n = "enc" + std::to_string(l);
        detail::add_unit(p, n + ".0", prev, cfg.channels(l));
        detail::add_unit(p, n + ".1", cfg.channels(l), cfg.channels(l));
        prev = cfg.channels(l);
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        const std::string n = "dec" + std::to_string(l);
        p.add(n + ".up.weight", ad::Tensor<T>({cfg.channels(l + 1), cfg.channels(l), 2, 2, 2}));
        p.add(n + ".up.bias", ad::Tensor<T>({cfg.channels(l)}));
        detail::add_unit(p, n + ".0", 2 * cfg.channels(l), cfg.channels(l));
        detail::add_unit(p, n + ".1", cfg.channels(l), cfg.channels(l));
    }
    detail::add_conv(p, "head", cfg.channels(0), cfg.out_channels, 1);

    Rng rng(sub_seed(seed, "init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const std::string& name = p.names[i];
        auto& t = p.tensors[i];
        if (t.rank() != 5) continue;
        const bool up = name.find(".up.") != std::string::npos;
        const double fan_in = up ? static_cast<double>(t.dim(0))
                                 : static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3) * t.dim(4));
        const double sd = std::sqrt(2.0 / fan_in);
        for (auto& v : t.data) v = static_cast<T>(sd * normal(rng));
    }
    return net;
}

/// Number of layers counted as conv, norm, activation, pool, up-conv, concat and head.
inline int layer_count(const UNetConfig& cfg) {
    const int per_level = 2 * 3;
    const int enc = cfg.levels * per_level + (cfg.levels - 1);
    const int dec = (cfg.levels - 1) * (per_level + 2);
    return enc + dec + 2;
}

/// Parameters registered on a tape, in ParamSet order.
template <class T>
std::vector<ad::Var> register_params(ad::Tape<T>& tape, const ad::ParamSet<T>& params,
                                     bool requires_grad) {
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const auto& t : params.tensors) vars.push_back(tape.leaf(t, requires_grad));
    return vars;
}

/// Forward pass on [B, Cin, D, H, W]; returns sigmoid probabilities [B, Cout, D, H, W].
template <class T>
ad::Var unet_forward(ad::Tape<T>& tape, const UNet<T>& net, const std::vector<ad::Var>& pv,
                     ad::Var input) {
    const auto& cfg = net.cfg;
    const auto& s = tape.shape(input);
    if (s.size() != 5 || s[1] != cfg.in_channels)
        throw ShapeError("unet_forward: expected [B," + std::to_string(cfg.in_channels) +
                         ",D,H,W], got " + ad::shape_str(s));
    for (int a = 2; a < 5; ++a)
        if (s[a] % cfg.divisor() != 0)
            throw ShapeError("unet_forward: spatial extents must be divisible by " +
                             std::to_string(cfg.divisor()));

    std::size_t next = 0;
    auto take = [&]() { return pv.at(next++); };
    auto unit = [&](ad::Var x) {
        const ad::Var w = take(), b = take(), g = take(), be = take();
        x = ad::conv3d(tape, x, w, b, {1, 1, 1}, {1, 1, 1});
        x = ad::instance_norm3d(tape, x, g, be);
        return ad::relu(tape, x);
    };

    std::vector<ad::Var> skips;
    ad::Var x = input;
    for (int l = 0; l < cfg.levels; ++l) {
        if (l > 0) x = ad::maxpool3d(tape, x);
        x = unit(x);
        x = unit(x);
        skips.push_back(x);
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        const ad::Var w = take(), b = take();
        x = ad::transposed_conv3d(tape, x, w, b, {2, 2, 2});
        x = ad::concat_channels(tape, skips[static_cast<std::size_t>(l)], x);
        x = unit(x);
        x = unit(x);
    }
    const ad::Var hw = take(), hb = take();
    x = ad::conv3d(tape, x, hw, hb);
    return ad::sigmoid(tape, x);
}

/// Inference helper: probabilities for a batch, no gradients recorded.
template <class T>
ad::Tensor<T> unet_predict(const UNet<T>& net, const ad::Tensor<T>& input) {
    ad::Tape<T> tape;
    const auto pv = register_params(tape, net.params, false);
    const ad::Var x = tape.leaf(input, false);
    return tape.value(unet_forward(tape, net, pv, x));
}

}  // namespace lrr
