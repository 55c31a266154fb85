#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "lrr/autodiff/checkpoint.hpp"
#include "lrr/unet3d.hpp"
#include "support/autodiff_checks.hpp"

using namespace lrr;
using lrr::testing::random_tensor;

namespace {

ad::Tensor<double> flip_w(const ad::Tensor<double>& t) {
    ad::Tensor<double> out = t;
    const auto W = t.shape.back();
    for (std::size_t r = 0; r < t.data.size() / static_cast<std::size_t>(W); ++r)
        for (std::int64_t i = 0; i < W; ++i) out.data[r * W + i] = t.data[r * W + (W - 1 - i)];
    return out;
}

}  // namespace

TEST(UNet, PresetParameterCounts) {
    EXPECT_EQ(build_unet<float>(UNetConfig::desk(), 1).parameter_count(), 85553);
    EXPECT_EQ(build_unet<float>(UNetConfig::clinical(), 1).parameter_count(), 5603393);
}

TEST(UNet, TwoLevelCountByHand) {
    // enc0: 2->1, 1->1 ; enc1: 1->2, 2->2 ; up 2->1 ; dec0: 2->1, 1->1 ; head 1->1
    UNetConfig c{2, 1, 2, 1};
    auto unit = [](int ci, int co) { return co * ci * 27 + co + 2 * co; };
    const int expected = unit(2, 1) + unit(1, 1) + unit(1, 2) + unit(2, 2) + (2 * 1 * 8 + 1) +
                         unit(2, 1) + unit(1, 1) + (1 + 1);
    EXPECT_EQ(build_unet<double>(c, 3).parameter_count(), expected);
}

TEST(UNet, PresetsAndValidation) {
    EXPECT_EQ(UNetConfig::preset("desk").levels, 3);
    EXPECT_EQ(UNetConfig::preset("clinical").base_channels, 32);
    EXPECT_THROW(UNetConfig::preset("huge"), ValidationError);
    EXPECT_THROW((build_unet<float>(UNetConfig{2, 1, 1, 8}, 1)), ValidationError);
    EXPECT_EQ(UNetConfig::desk().divisor(), 4);
    EXPECT_EQ(UNetConfig::clinical().divisor(), 8);
}

TEST(UNet, HeInitialisation) {
    const auto net = build_unet<double>(UNetConfig::clinical(), 9);
    const auto& p = net.params;
    const auto& w = p.tensors[p.index_of("enc3.1.conv.weight")];  // 256*256*27 weights
    double m = 0.0, v = 0.0;
    for (double x : w.data) m += x;
    m /= static_cast<double>(w.data.size());
    for (double x : w.data) v += (x - m) * (x - m);
    v /= static_cast<double>(w.data.size());
    const double expected = 2.0 / (256.0 * 27.0);
    EXPECT_NEAR(m, 0.0, 5.0 * std::sqrt(expected / w.data.size()));
    EXPECT_NEAR(v / expected, 1.0, 0.01);

    const auto& up = p.tensors[p.index_of("dec2.up.weight")];  // fan-in = 256 channels
    double vu = 0.0;
    for (double x : up.data) vu += x * x;
    EXPECT_NEAR(vu / up.data.size() / (2.0 / 256.0), 1.0, 0.02);

    for (double x : p.tensors[p.index_of("enc0.0.conv.bias")].data) EXPECT_EQ(x, 0.0);
    for (double x : p.tensors[p.index_of("enc0.0.norm.gamma")].data) EXPECT_EQ(x, 1.0);
    for (double x : p.tensors[p.index_of("enc0.0.norm.beta")].data) EXPECT_EQ(x, 0.0);
}

TEST(UNet, InitIsSeedDeterministic) {
    const auto a = build_unet<double>(UNetConfig::desk(), 5);
    const auto b = build_unet<double>(UNetConfig::desk(), 5);
    const auto c = build_unet<double>(UNetConfig::desk(), 6);
    for (std::size_t i = 0; i < a.params.size(); ++i)
        EXPECT_EQ(a.params.tensors[i].data, b.params.tensors[i].data);
    EXPECT_NE(a.params.tensors[0].data, c.params.tensors[0].data);
}

TEST(UNet, ForwardShapeAndRange) {
    const auto net = build_unet<float>(UNetConfig::desk(), 2);
    Rng rng(1);
    const auto x = ad::tensor_cast<float>(random_tensor(rng, {2, 2, 8, 12, 16}));
    const auto y = unet_predict(net, x);
    EXPECT_EQ(y.shape, (ad::Shape{2, 1, 8, 12, 16}));
    for (float v : y.data) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
    }
}

TEST(UNet, RejectsBadInputs) {
    const auto net = build_unet<float>(UNetConfig::desk(), 2);
    EXPECT_THROW(unet_predict(net, ad::Tensor<float>({1, 2, 8, 8, 6})), ShapeError);
    EXPECT_THROW(unet_predict(net, ad::Tensor<float>({1, 3, 8, 8, 8})), ShapeError);
    EXPECT_THROW(unet_predict(net, ad::Tensor<float>({2, 8, 8, 8})), ShapeError);
}

TEST(UNet, BatchItemsAreIndependent) {
    const auto net = build_unet<double>(UNetConfig{2, 1, 2, 2}, 4);
    Rng rng(8);
    const auto a = random_tensor(rng, {1, 2, 4, 4, 4});
    const auto b = random_tensor(rng, {1, 2, 4, 4, 4});
    ad::Tensor<double> ab({2, 2, 4, 4, 4});
    std::copy(a.data.begin(), a.data.end(), ab.data.begin());
    std::copy(b.data.begin(), b.data.end(), ab.data.begin() + 128);
    const auto ya = unet_predict(net, a);
    const auto yab = unet_predict(net, ab);
    for (std::size_t i = 0; i < 64; ++i) EXPECT_DOUBLE_EQ(ya.data[i], yab.data[i]);
}

TEST(UNet, NotFlipEquivariantWithoutTraining) {
    // Negative control: a random network does not commute with mirroring, which is why
    // flip augmentation has something to teach.
    const auto net = build_unet<double>(UNetConfig::desk(), 3);
    Rng rng(2);
    const auto x = random_tensor(rng, {1, 2, 8, 8, 8});
    const auto y = unet_predict(net, x);
    const auto yf = unet_predict(net, flip_w(x));
    const auto back = flip_w(yf);
    double diff = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) diff = std::max(diff, std::abs(y.data[i] - back.data[i]));
    EXPECT_GT(diff, 1e-3);
}

TEST(UNet, GradientOfLossMatchesFiniteDifferences) {
    const UNetConfig cfg{2, 1, 2, 2};
    const auto net = build_unet<double>(cfg, 12);
    Rng rng(6);
    const auto x = random_tensor(rng, {1, 2, 4, 4, 4});
    ad::Tensor<double> target({1, 1, 4, 4, 4});
    for (std::size_t i = 0; i < target.data.size(); ++i) target.data[i] = (i % 3 == 0) ? 1.0 : 0.0;

    auto loss_of = [&](const ad::ParamSet<double>& params, std::vector<std::vector<double>>* g) {
        UNet<double> n{cfg, params};
        ad::Tape<double> tape;
        const auto pv = register_params(tape, n.params, g != nullptr);
        const auto p = unet_forward(tape, n, pv, tape.leaf(x));
        const auto l = ad::dice_loss(tape, p, tape.leaf(target));
        const double v = tape.value(l).data[0];
        if (g) {
            tape.backward(l);
            for (const auto& var : pv) g->push_back(tape.grad(var));
        }
        return v;
    };
    std::vector<std::vector<double>> grads;
    loss_of(net.params, &grads);

    const double h = 1e-6;
    int checked = 0;
    for (std::size_t t = 0; t < net.params.size(); t += 3) {
        for (std::size_t i = 0; i < net.params.tensors[t].data.size(); i += 7) {
            auto plus = net.params, minus = net.params;
            plus.tensors[t].data[i] += h;
            minus.tensors[t].data[i] -= h;
            const double num = (loss_of(plus, nullptr) - loss_of(minus, nullptr)) / (2 * h);
            const double a = grads[t][i];
            const double scale = std::max({std::abs(a), std::abs(num), 1e-6});
            EXPECT_LT(std::abs(a - num) / scale, 1e-4) << net.params.names[t] << "[" << i << "]";
            ++checked;
        }
    }
    EXPECT_GT(checked, 20);
}

TEST(UNet, LayerCount) {
    EXPECT_EQ(layer_count(UNetConfig::desk()), 38);  // 3*6 + 2 pools + 2*(1+1+6) + head + sigmoid
    EXPECT_EQ(layer_count(UNetConfig::clinical()), 53);
}

TEST(UNet, CheckpointRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "lrr_unet_ckpt";
    std::filesystem::remove_all(dir);
    const auto net = build_unet<float>(UNetConfig::desk(), 7);
    ad::save_checkpoint(dir / "model", net.params, {{"epoch", 3}});
    auto loaded = build_unet<float>(UNetConfig::desk(), 8);
    const auto data = ad::load_checkpoint(dir / "model.json");
    EXPECT_EQ(data.meta.at("epoch"), 3);
    ad::assign_from(loaded.params, data.params);
    for (std::size_t i = 0; i < net.params.size(); ++i)
        EXPECT_EQ(net.params.tensors[i].data, loaded.params.tensors[i].data);

    auto other = build_unet<float>(UNetConfig{2, 1, 2, 8}, 1);
    EXPECT_THROW(ad::assign_from(other.params, data.params), ValidationError);
    EXPECT_THROW(ad::load_checkpoint(dir / "missing"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(UNet, ReloadedFp64ModelPredictsBitwiseIdentically) {
    const auto dir = std::filesystem::temp_directory_path() / "lrr_unet_ckpt64";
    std::filesystem::remove_all(dir);
    const auto net = build_unet<double>(UNetConfig::desk(), 12);
    ad::save_checkpoint(dir / "model", net.params, {});
    auto loaded = build_unet<double>(UNetConfig::desk(), 13);
    ad::assign_from(loaded.params, ad::load_checkpoint(dir / "model").params);
    Rng rng(14);
    const auto x = random_tensor(rng, {1, 2, 8, 8, 8});
    EXPECT_EQ(unet_predict(net, x).data, unet_predict(loaded, x).data);
    std::filesystem::remove_all(dir);
}
