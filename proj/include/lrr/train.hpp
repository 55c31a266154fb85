#pragma once

// Training protocol: seeded shuffling, flip augmentation, Adam on the Dice loss, validation Dice
// after every epoch, plateau learning-rate reduction, early stopping and best-epoch weights.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrr/analysis/metrics.hpp"
#include "lrr/autodiff/adam.hpp"
#include "lrr/preprocess.hpp"
#include "lrr/rng.hpp"
#include "lrr/unet3d.hpp"

namespace lrr {

enum class PlateauMode {
    Multiply,       // lr <- lr * factor
    ReduceByFactor  // lr <- lr * (1 - factor)
};

inline std::string to_string(PlateauMode m) {
    return m == PlateauMode::Multiply ? "multiply" : "reduce-by-factor";
}

inline PlateauMode parse_plateau_mode(const std::string& s) {
    if (s == "multiply") return PlateauMode::Multiply;
    if (s == "reduce-by-factor") return PlateauMode::ReduceByFactor;
    throw ConfigError("unknown plateau_mode '" + s + "' (expected multiply|reduce-by-factor)");
}

struct TrainConfig {
    double lr0 = 0.1;
    int plateau_patience = 10;
    double plateau_factor = 0.05;
    PlateauMode plateau_mode = PlateauMode::Multiply;
    int early_stop_patience = 60;
    int batch_size = 2;
    double flip_prob = 0.1;
    int ensemble_size = 5;
    double binarize_threshold = 0.5;
    std::uint64_t seed = 1;
    int max_epochs = 300;

    void validate() const {
        if (!(lr0 > 0.0)) throw ConfigError("TrainConfig: lr0 must be > 0");
        if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
            throw ConfigError("TrainConfig: plateau_factor must lie in (0, 1)");
        if (plateau_patience < 1 || early_stop_patience < 1)
            throw ConfigError("TrainConfig: patience values must be >= 1");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
            throw ConfigError("TrainConfig: flip_prob must lie in [0, 1]");
        if (ensemble_size < 1) throw ConfigError("TrainConfig: ensemble_size must be >= 1");
        if (max_epochs < 1) throw ConfigError("TrainConfig: max_epochs must be >= 1");
    }

    double reduced(double lr) const {
        return plateau_mode == PlateauMode::Multiply ? lr * plateau_factor
                                                     : lr * (1.0 - plateau_factor);
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"lr0", c.lr0},
            {"plateau_patience", c.plateau_patience},
            {"plateau_factor", c.plateau_factor},
            {"plateau_mode", to_string(c.plateau_mode)},
            {"early_stop_patience", c.early_stop_patience},
            {"batch_size", c.batch_size},
            {"flip_prob", c.flip_prob},
            {"ensemble_size", c.ensemble_size},
            {"binarize_threshold", c.binarize_threshold},
            {"seed", c.seed},
            {"max_epochs", c.max_epochs}};
}

/// Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.lr0 = j.value("lr0", c.lr0);
        c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
        c.plateau_factor = j.value("plateau_factor", c.plateau_factor);
        if (j.contains("plateau_mode"))
            c.plateau_mode = parse_plateau_mode(j.at("plateau_mode").get<std::string>());
        c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.flip_prob = j.value("flip_prob", c.flip_prob);
        c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
        c.binarize_threshold = j.value("binarize_threshold", c.binarize_threshold);
        c.seed = j.value("seed", c.seed);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

/// One network input with its target, both in crop space.
template <class T>
struct Sample {
    std::string id;
    ad::Tensor<T> input;  // [2, D, H, W]
    ad::Tensor<T> label;  // [1, D, H, W]
};

template <class T>
Sample<T> make_sample(const PatientCase& normalized, const CropSpec& spec, LabelSource label) {
    auto a = assemble_input<T>(normalized, spec, label);
    return {normalized.id, std::move(a.input), std::move(a.label)};
}

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_dice = 0.0;
    double lr = 0.0;
};

template <class T>
struct TrainResult {
    UNet<T> best;
    double best_val_dice = -1.0;
    int best_epoch = 0;
    std::vector<EpochRecord> history;
};

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& h) {
    os << "epoch,train_loss,val_dice,lr\n";
    char buf[160];
    for (const auto& r : h) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_dice,
                      r.lr);
        os << buf;
    }
}

namespace detail {

// Reverses the last (x) axis of every [.., D, H, W] row.
template <class T>
void flip_last_axis(T* data, std::int64_t count, std::int64_t w) {
    for (std::int64_t r = 0; r < count / w; ++r) std::reverse(data + r * w, data + (r + 1) * w);
}

inline double unit_uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void check_samples(const std::vector<Sample<T>>& s, const char* what) {
    for (const auto& x : s) {
        if (x.input.rank() != 4 || x.label.rank() != 4)
            throw ShapeError(std::string(what) + ": sample '" + x.id + "' is not [C,D,H,W]");
        if (x.input.shape != s.front().input.shape)
            throw ShapeError(std::string(what) + ": samples differ in shape");
    }
}

}  // namespace detail

/// Dice of a thresholded probability map against a {0,1} label of the same size.
template <class T>
double binary_dice(const std::vector<T>& prob, const std::vector<T>& label, double threshold) {
    if (prob.size() != label.size()) throw ShapeError("binary_dice: size mismatch");
    std::size_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const bool pi = static_cast<double>(prob[i]) >= threshold;
        const bool gi = label[i] > T(0.5);
        p += pi;
        g += gi;
        both += pi && gi;
    }
    return analysis::dice(analysis::OverlapCounts{p, g, both});
}

/// Mean per-sample Dice of the network's binarized predictions.
template <class T>
double mean_dice(const UNet<T>& net, const std::vector<Sample<T>>& samples, double threshold) {
    if (samples.empty()) throw ValidationError("mean_dice: no samples");
    double s = 0.0;
    for (const auto& x : samples) {
        ad::Tensor<T> in = x.input;
        in.shape.insert(in.shape.begin(), 1);
        const auto prob = unet_predict(net, in);
        s += binary_dice(prob.data, x.label.data, threshold);
    }
    return s / static_cast<double>(samples.size());
}

/// Trains `init` in place of a copy; the returned weights are those of the best validation epoch.
template <class T>
TrainResult<T> train(const UNet<T>& init, const std::vector<Sample<T>>& train_set,
                     const std::vector<Sample<T>>& val_set, const TrainConfig& cfg,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (train_set.empty() || val_set.empty())
        throw ValidationError("train: training and validation sets must be non-empty");
    detail::check_samples(train_set, "train");
    detail::check_samples(val_set, "train");

    UNet<T> net = init;
    ad::AdamState<T> adam(net.params);
    Rng shuffle_rng(sub_seed(cfg.seed, "shuffle"));
    Rng augment_rng(sub_seed(cfg.seed, "augment"));

    const ad::Shape& in_shape = train_set.front().input.shape;
    const ad::Shape& lab_shape = train_set.front().label.shape;
    const std::int64_t in_n = ad::numel(in_shape), lab_n = ad::numel(lab_shape);
    const std::int64_t width = in_shape.back();

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult<T> res;
    res.best = net;
    double lr = cfg.lr0;
    int bad_epochs = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i-- > 1;)
            std::swap(order[i], order[static_cast<std::size_t>(shuffle_rng() % (i + 1))]);
        std::vector<bool> flip(order.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            flip[i] = detail::unit_uniform(augment_rng) < cfg.flip_prob;

        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const auto B = static_cast<std::int64_t>(stop - start);
            ad::Shape xs = in_shape, ys = lab_shape;
            xs.insert(xs.begin(), B);
            ys.insert(ys.begin(), B);
            ad::Tensor<T> xb(xs), yb(ys);
            for (std::size_t s = start; s < stop; ++s) {
                const auto& smp = train_set[order[s]];
                T* xd = xb.data.data() + static_cast<std::int64_t>(s - start) * in_n;
                T* yd = yb.data.data() + static_cast<std::int64_t>(s - start) * lab_n;
                std::copy(smp.input.data.begin(), smp.input.data.end(), xd);
                std::copy(smp.label.data.begin(), smp.label.data.end(), yd);
                if (flip[s]) {
                    detail::flip_last_axis(xd, in_n, width);
                    detail::flip_last_axis(yd, lab_n, width);
                }
            }

            ad::Tape<T> tape;
            const auto pv = register_params(tape, net.params, true);
            const ad::Var x = tape.leaf(std::move(xb), false);
            const ad::Var y = tape.leaf(std::move(yb), false);
            const ad::Var loss = ad::dice_loss(tape, unet_forward(tape, net, pv, x), y);
            tape.backward(loss);
            std::vector<std::vector<T>> grads;
            grads.reserve(pv.size());
            for (const auto& v : pv) grads.push_back(std::move(tape.grad(v)));
            ad::adam_step(net.params, grads, adam, lr);
            loss_sum += static_cast<double>(tape.value(loss).data[0]);
            ++batches;
        }

        EpochRecord rec{epoch, loss_sum / batches, mean_dice(net, val_set, cfg.binarize_threshold),
                        lr};
        res.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_dice > res.best_val_dice) {
            res.best_val_dice = rec.val_dice;
            res.best_epoch = epoch;
            res.best = net;
            bad_epochs = 0;
        } else if (++bad_epochs >= cfg.plateau_patience) {
            lr = cfg.reduced(lr);
            bad_epochs = 0;
        }
        if (epoch - res.best_epoch >= cfg.early_stop_patience) break;
    }
    return res;
}

template <class T>
struct EnsembleResult {
    std::vector<TrainResult<T>> members;
    std::size_t best_index = 0;

    const TrainResult<T>& best() const { return members.at(best_index); }
};

inline std::uint64_t member_seed(std::uint64_t seed, int k) {
    return sub_seed(seed, "member", static_cast<std::uint64_t>(k));
}

/// `ensemble_size` runs with derived seeds; `init(k, seed_k)` supplies each starting network.
/// The member with the highest validation Dice wins; ties go to the lowest index.
template <class T>
EnsembleResult<T> train_ensemble(const std::function<UNet<T>(int, std::uint64_t)>& init,
                                 const std::vector<Sample<T>>& train_set,
                                 const std::vector<Sample<T>>& val_set, const TrainConfig& cfg,
                                 const std::function<void(int, const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    EnsembleResult<T> out;
    for (int k = 0; k < cfg.ensemble_size; ++k) {
        TrainConfig mc = cfg;
        mc.seed = member_seed(cfg.seed, k);
        std::function<void(const EpochRecord&)> cb;
        if (on_epoch) cb = [&on_epoch, k](const EpochRecord& r) { on_epoch(k, r); };
        out.members.push_back(train(init(k, mc.seed), train_set, val_set, mc, cb));
        if (out.members.back().best_val_dice > out.members[out.best_index].best_val_dice)
            out.best_index = out.members.size() - 1;
    }
    return out;
}

/// AI random: every member starts from its own He initialization.
template <class T>
EnsembleResult<T> train_random(const UNetConfig& net_cfg, const std::vector<Sample<T>>& train_set,
                               const std::vector<Sample<T>>& val_set, const TrainConfig& cfg,
                               const std::function<void(int, const EpochRecord&)>& on_epoch = {}) {
    return train_ensemble<T>(
        [&net_cfg](int, std::uint64_t s) { return build_unet<T>(net_cfg, s); }, train_set,
        val_set, cfg, on_epoch);
}

/// Tumour-segmentation pretraining: one run on GTV-labelled samples.
template <class T>
TrainResult<T> pretrain_tumour(const UNetConfig& net_cfg, const std::vector<Sample<T>>& train_set,
                               const std::vector<Sample<T>>& val_set, const TrainConfig& cfg,
                               const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    TrainConfig pc = cfg;
    pc.seed = sub_seed(cfg.seed, "pretrain");
    return train(build_unet<T>(net_cfg, pc.seed), train_set, val_set, pc, on_epoch);
}

/// AI finetune: every member starts from the pretrained weights.
template <class T>
EnsembleResult<T> finetune(const UNet<T>& pretrained, const std::vector<Sample<T>>& train_set,
                           const std::vector<Sample<T>>& val_set, const TrainConfig& cfg,
                           const std::function<void(int, const EpochRecord&)>& on_epoch = {}) {
    return train_ensemble<T>([&pretrained](int, std::uint64_t) { return pretrained; }, train_set,
                             val_set, cfg, on_epoch);
}

struct Prediction {
    Mask3D mask;        // on the full case grid
    Volume3D prob;      // on the full case grid, 0 outside the crop box
};

/// Runs the network on the case's crop and pastes the thresholded map back onto the case grid.
template <class T>
Prediction predict_mask(const UNet<T>& net, const PatientCase& normalized, const CropSpec& spec,
                        double threshold = 0.5) {
    const Index3 center = mask_centroid_voxel(normalized.gtv);
    const auto ct = crop_centered(normalized.ct, center, spec.dims, -1.0f);
    const auto pet = crop_centered(normalized.pet, center, spec.dims, 0.0f);
    const std::int64_t n = static_cast<std::int64_t>(ct.data.size());
    ad::Tensor<T> in({1, 2, spec.dims[2], spec.dims[1], spec.dims[0]});
    for (std::int64_t i = 0; i < n; ++i) {
        in.data[i] = static_cast<T>(ct.data[i]);
        in.data[n + i] = static_cast<T>(pet.data[i]);
    }
    const auto prob = unet_predict(net, in);

    const Grid3D& g = normalized.ct.grid;
    Prediction out{Mask3D(g, 0), Volume3D(g, 0.0f)};
    const Index3 start{center[0] - spec.dims[0] / 2, center[1] - spec.dims[1] / 2,
                       center[2] - spec.dims[2] / 2};
    for (std::int64_t k = 0; k < spec.dims[2]; ++k)
        for (std::int64_t j = 0; j < spec.dims[1]; ++j)
            for (std::int64_t i = 0; i < spec.dims[0]; ++i) {
                const Index3 q{start[0] + i, start[1] + j, start[2] + k};
                if (!g.contains(q)) continue;
                const double p =
                    static_cast<double>(prob.data[i + spec.dims[0] * (j + spec.dims[1] * k)]);
                const std::size_t li = g.linear(q);
                out.prob.data[li] = static_cast<float>(p);
                out.mask.data[li] = p >= threshold ? 1 : 0;
            }
    return out;
}

}  // namespace lrr
