#include <gtest/gtest.h>

#include <sstream>

#include "lrr/phantom.hpp"
#include "lrr/train.hpp"

using namespace lrr;
using namespace lrr::phantom;

namespace {

const UNetConfig kTiny{2, 1, 2, 2};

// Small hand-built samples: a bright PET blob labelled as foreground.
std::vector<Sample<double>> blob_samples(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sample<double>> out;
    for (int s = 0; s < n; ++s) {
        Sample<double> smp{"s" + std::to_string(s), ad::Tensor<double>({2, 4, 4, 4}),
                           ad::Tensor<double>({1, 4, 4, 4})};
        const int cx = 1 + s % 2, cy = 1 + (s / 2) % 2;
        for (int z = 0; z < 4; ++z)
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x) {
                    const int i = (z * 4 + y) * 4 + x;
                    const bool fg = std::abs(x - cx) + std::abs(y - cy) <= 1 && z >= 1 && z <= 2;
                    smp.input.data[i] = uniform(rng, -0.2, 0.2);
                    smp.input.data[64 + i] = (fg ? 2.0 : 0.0) + uniform(rng, -0.2, 0.2);
                    smp.label.data[i] = fg ? 1.0 : 0.0;
                }
        out.push_back(std::move(smp));
    }
    return out;
}

TrainConfig quick_config(int epochs) {
    TrainConfig c;
    c.max_epochs = epochs;
    c.lr0 = 0.05;
    c.ensemble_size = 2;
    return c;
}

}  // namespace

TEST(TrainConfig, Defaults) {
    const TrainConfig c;
    EXPECT_DOUBLE_EQ(c.lr0, 0.1);
    EXPECT_EQ(c.plateau_patience, 10);
    EXPECT_DOUBLE_EQ(c.plateau_factor, 0.05);
    EXPECT_EQ(c.plateau_mode, PlateauMode::Multiply);
    EXPECT_EQ(c.early_stop_patience, 60);
    EXPECT_EQ(c.batch_size, 2);
    EXPECT_DOUBLE_EQ(c.flip_prob, 0.1);
    EXPECT_EQ(c.ensemble_size, 5);
    EXPECT_DOUBLE_EQ(c.binarize_threshold, 0.5);
}

TEST(TrainConfig, PlateauModes) {
    TrainConfig c;
    EXPECT_DOUBLE_EQ(c.reduced(0.1), 0.1 * 0.05);
    c.plateau_mode = PlateauMode::ReduceByFactor;
    EXPECT_DOUBLE_EQ(c.reduced(0.1), 0.1 * 0.95);
    EXPECT_EQ(parse_plateau_mode("reduce-by-factor"), PlateauMode::ReduceByFactor);
    EXPECT_EQ(to_string(PlateauMode::Multiply), "multiply");
    EXPECT_THROW(parse_plateau_mode("linear"), ConfigError);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
    TrainConfig c;
    c.lr0 = 0.02;
    c.max_epochs = 17;
    c.plateau_mode = PlateauMode::ReduceByFactor;
    c.seed = 99;
    const auto back = train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));

    EXPECT_THROW(train_config_from_json({{"plateau_factor", 1.0}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"plateau_patience", 0}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"lr0", -1.0}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"flip_prob", 1.5}}), ConfigError);
    EXPECT_THROW(train_config_from_json({{"batch_size", 0}}), ConfigError);
}

TEST(Train, OneEpochHistory) {
    const auto data = blob_samples(3, 1);
    const auto r = train(build_unet<double>(kTiny, 1), data, data, quick_config(1));
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.best_epoch, 1);
    EXPECT_EQ(r.history[0].epoch, 1);
    EXPECT_DOUBLE_EQ(r.history[0].lr, 0.05);
    EXPECT_DOUBLE_EQ(r.best_val_dice, r.history[0].val_dice);
}

TEST(Train, RejectsEmptySets) {
    const auto data = blob_samples(2, 1);
    const auto net = build_unet<double>(kTiny, 1);
    EXPECT_THROW(train(net, {}, data, quick_config(1)), ValidationError);
    EXPECT_THROW(train(net, data, {}, quick_config(1)), ValidationError);
}

TEST(Train, RejectsMismatchedShapes) {
    auto data = blob_samples(2, 1);
    data[1].input = ad::Tensor<double>({2, 4, 4, 8});
    EXPECT_THROW(train(build_unet<double>(kTiny, 1), data, data, quick_config(1)), ShapeError);
}

TEST(Train, IdenticalSeedsGiveIdenticalHistory) {
    const auto data = blob_samples(4, 2);
    auto cfg = quick_config(4);
    cfg.flip_prob = 0.5;
    const auto a = train(build_unet<double>(kTiny, 3), data, data, cfg);
    const auto b = train(build_unet<double>(kTiny, 3), data, data, cfg);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
        EXPECT_EQ(a.history[i].val_dice, b.history[i].val_dice);
    }
    for (std::size_t i = 0; i < a.best.params.size(); ++i)
        EXPECT_EQ(a.best.params.tensors[i].data, b.best.params.tensors[i].data);
}

TEST(Train, BestIsTheMaximumOfHistory) {
    const auto data = blob_samples(4, 3);
    const auto r = train(build_unet<double>(kTiny, 4), data, data, quick_config(12));
    double best = -1.0;
    int at = 0;
    for (const auto& h : r.history)
        if (h.val_dice > best) {
            best = h.val_dice;
            at = h.epoch;
        }
    EXPECT_EQ(r.best_val_dice, best);
    EXPECT_EQ(r.best_epoch, at);
    for (std::size_t i = 0; i < r.history.size(); ++i) EXPECT_EQ(r.history[i].epoch, int(i) + 1);
    // The returned weights reproduce the recorded validation score.
    EXPECT_DOUBLE_EQ(mean_dice(r.best, data, 0.5), r.best_val_dice);
}

TEST(Train, LearningRateOnlyDropsByThePlateauFactor) {
    const auto data = blob_samples(2, 4);
    auto cfg = quick_config(25);
    cfg.plateau_patience = 1;
    cfg.plateau_factor = 0.5;
    const auto r = train(build_unet<double>(kTiny, 5), data, data, cfg);
    int drops = 0;
    for (std::size_t i = 1; i < r.history.size(); ++i) {
        const double prev = r.history[i - 1].lr, cur = r.history[i].lr;
        EXPECT_LE(cur, prev);
        if (cur != prev) {
            EXPECT_EQ(cur, prev * 0.5);
            ++drops;
        }
    }
    EXPECT_GT(drops, 0);
}

TEST(Train, EarlyStoppingEndsTheRun) {
    const auto data = blob_samples(2, 5);
    auto cfg = quick_config(200);
    cfg.early_stop_patience = 3;
    const auto r = train(build_unet<double>(kTiny, 6), data, data, cfg);
    EXPECT_LT(r.history.size(), 200u);
    EXPECT_EQ(r.history.back().epoch - r.best_epoch, 3);
}

TEST(Train, OverfitLossDecreasesOverFirstEpochs) {
    PhantomParams prm;
    const auto g = generate_case(prm, 0, CaseRole::RelapseTask);
    const auto sample = make_sample<double>(normalize_case(g.patient), CropSpec{{16, 16, 16}, 0.15},
                                            LabelSource::Relapse);
    TrainConfig cfg;
    cfg.max_epochs = 5;
    cfg.flip_prob = 0.0;
    cfg.batch_size = 1;
    const auto r = train(build_unet<double>(UNetConfig::desk(), 1), std::vector{sample}, std::vector{sample}, cfg);
    ASSERT_EQ(r.history.size(), 5u);
    for (std::size_t i = 1; i < 5; ++i)
        EXPECT_LT(r.history[i].train_loss, r.history[i - 1].train_loss) << "epoch " << i + 1;
}

TEST(Ensemble, PicksTheBestMember) {
    const auto data = blob_samples(4, 6);
    auto cfg = quick_config(3);
    cfg.ensemble_size = 3;
    const auto e = train_random(kTiny, data, data, cfg);
    ASSERT_EQ(e.members.size(), 3u);
    for (const auto& m : e.members) EXPECT_GE(e.best().best_val_dice, m.best_val_dice);
    for (std::size_t k = 0; k < e.best_index; ++k)
        EXPECT_LT(e.members[k].best_val_dice, e.best().best_val_dice);
    // Members draw distinct seeds, so they start from different weights.
    EXPECT_NE(e.members[0].history[0].train_loss, e.members[1].history[0].train_loss);
}

TEST(Ensemble, TieGoesToLowestIndex) {
    // One sample and no flips: every member trains identically from the same start.
    const auto data = blob_samples(1, 7);
    auto cfg = quick_config(2);
    cfg.flip_prob = 0.0;
    cfg.ensemble_size = 3;
    const auto pre = build_unet<double>(kTiny, 8);
    const auto e = finetune(pre, data, data, cfg);
    EXPECT_EQ(e.members[0].best_val_dice, e.members[2].best_val_dice);
    EXPECT_EQ(e.best_index, 0u);
}

TEST(Ensemble, FinetuneStartsFromPretrainedWeights) {
    const auto data = blob_samples(2, 8);
    auto cfg = quick_config(1);
    cfg.ensemble_size = 2;
    const auto pre = pretrain_tumour(kTiny, data, data, cfg);
    const auto e = finetune(pre.best, data, data, cfg);
    // Same initial weights, so the first-epoch losses differ only through shuffle order.
    const auto r0 = train(pre.best, data, data,
                          [&] {
                              auto c = cfg;
                              c.seed = member_seed(cfg.seed, 0);
                              return c;
                          }());
    EXPECT_EQ(e.members[0].history[0].train_loss, r0.history[0].train_loss);
}

TEST(History, CsvFormat) {
    std::ostringstream os;
    write_history_csv(os, {{1, 0.5, 0.25, 0.1}, {2, 0.125, 0.75, 0.005}});
    EXPECT_EQ(os.str(), "epoch,train_loss,val_dice,lr\n1,0.5,0.25,0.10000000000000001\n"
                        "2,0.125,0.75,0.0050000000000000001\n");
}

class PredictMaskTest : public ::testing::Test {
protected:
    void SetUp() override {
        PhantomParams prm;
        pc = normalize_case(generate_case(prm, 1, CaseRole::RelapseTask).patient);
        net = build_unet<float>(UNetConfig::desk(), 2);
    }
    PatientCase pc;
    UNet<float> net;
    CropSpec spec{{16, 20, 12}, 0.15};
};

TEST_F(PredictMaskTest, ThresholdZeroFillsTheCropBox) {
    const auto p = predict_mask(net, pc, spec, 0.0);
    EXPECT_EQ(count_foreground(p.mask), static_cast<std::size_t>(16 * 20 * 12));
    const Index3 c = mask_centroid_voxel(pc.gtv);
    EXPECT_EQ(p.mask.at(c), 1);
    EXPECT_EQ(p.mask.at(c[0] - 8, c[1], c[2]), 1);
    EXPECT_EQ(p.mask.at(c[0] + 7, c[1], c[2]), 1);
    EXPECT_EQ(p.mask.at(c[0] + 8, c[1], c[2]), 0);
    EXPECT_TRUE(p.mask.grid.same_as(pc.ct.grid));
}

TEST_F(PredictMaskTest, ThresholdOneIsEmpty) {
    EXPECT_EQ(count_foreground(predict_mask(net, pc, spec, 1.0).mask), 0u);
}

TEST_F(PredictMaskTest, CountMatchesProbabilityEnumeration) {
    const auto p = predict_mask(net, pc, spec, 0.5);
    std::size_t brute = 0;
    for (float v : p.prob.data) brute += v >= 0.5f ? 1 : 0;
    EXPECT_EQ(count_foreground(p.mask), brute);
    for (std::size_t i = 0; i < p.mask.data.size(); ++i)
        EXPECT_EQ(p.mask.data[i], p.prob.data[i] >= 0.5f ? 1 : 0);
}

TEST_F(PredictMaskTest, MatchesAssembledInputForward) {
    const auto a = assemble_input<float>(pc, spec, LabelSource::Gtv);
    ad::Tensor<float> batch = a.input;
    batch.shape.insert(batch.shape.begin(), 1);
    const auto prob = unet_predict(net, batch);
    const auto p = predict_mask(net, pc, spec, 0.5);
    const auto back = crop_centered(p.prob, a.center, spec.dims, 0.0f);
    for (std::size_t i = 0; i < back.data.size(); ++i) EXPECT_EQ(back.data[i], prob.data[i]);
}
