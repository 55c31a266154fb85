#pragma once

// File-based experiment pipeline: phantom -> split -> preprocess -> train -> sweep -> predict ->
// evaluate. Every stage reads its inputs from and writes its outputs to the output directory,
// and every output is a pure function of the inputs, the configuration and the global seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrr/analysis/report.hpp"
#include "lrr/autodiff/checkpoint.hpp"
#include "lrr/baselines.hpp"
#include "lrr/phantom.hpp"
#include "lrr/train.hpp"
#include "lrr/vf32.hpp"

namespace lrr::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"ai_random", "ai_finetune", "suvmax", "gtv"};
    return m;
}

using Logger = std::function<void(const std::string&)>;

struct ExperimentConfig {
    fs::path out = "out";
    fs::path cohort;  // empty: <out>/cohort.json
    std::uint64_t seed = 1;
    std::string preset = "desk";
    double padding_fraction = 0.15;
    std::optional<std::array<std::int64_t, 3>> crop_dims;  // empty: computed from the data
    TrainConfig train;
    std::optional<TrainConfig> pretrain;  // empty: same as `train`
    bool sweep = true;
    int suvmax_percent = 38;  // used for the SUVmax baseline when the sweep is disabled
    std::vector<std::string> methods = known_methods();
    bool fp64 = false;
    phantom::PhantomParams phantom;
    int n_cases = 40;

    fs::path cohort_path() const { return cohort.empty() ? out / "cohort.json" : cohort; }
    UNetConfig net() const { return UNetConfig::preset(preset); }
    TrainConfig pretrain_config() const { return pretrain ? *pretrain : train; }

    bool wants(const std::string& m) const {
        return std::find(methods.begin(), methods.end(), m) != methods.end();
    }

    /// The global seed drives every random stream.
    void set_seed(std::uint64_t s) {
        seed = s;
        train.seed = s;
        if (pretrain) pretrain->seed = s;
        phantom.seed = s;
    }

    void validate() const {
        if (methods.empty()) throw ConfigError("methods: at least one method is required");
        for (const auto& m : methods)
            if (std::find(known_methods().begin(), known_methods().end(), m) ==
                known_methods().end())
                throw ConfigError("methods: unknown method '" + m +
                                  "' (expected ai_random, ai_finetune, suvmax, gtv)");
        if (!(padding_fraction >= 0.0)) throw ConfigError("padding_fraction must be >= 0");
        if (n_cases < 3) throw ConfigError("n_cases must be >= 3");
        if (suvmax_percent < 1 || suvmax_percent > 100)
            throw ConfigError("suvmax_percent must lie in 1..100");
        try {
            net().validate();
        } catch (const ValidationError& e) {
            throw ConfigError(std::string("preset: ") + e.what());
        }
        train.validate();
        pretrain_config().validate();
        if (crop_dims) {
            CropSpec s;
            s.dims = *crop_dims;
            try {
                s.validate(net().levels);
            } catch (const ValidationError& e) {
                throw ConfigError(std::string("crop_dims: ") + e.what());
            }
        }
    }
};

inline std::vector<std::string> parse_methods(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline json to_json(const ExperimentConfig& c) {
    json j{{"out", c.out.string()},
           {"seed", c.seed},
           {"preset", c.preset},
           {"padding_fraction", c.padding_fraction},
           {"train", to_json(c.train)},
           {"sweep", c.sweep},
           {"suvmax_percent", c.suvmax_percent},
           {"methods", c.methods},
           {"fp64", c.fp64},
           {"phantom", phantom::to_json(c.phantom)},
           {"n_cases", c.n_cases}};
    if (!c.cohort.empty()) j["cohort"] = c.cohort.string();
    if (c.crop_dims) j["crop_dims"] = *c.crop_dims;
    if (c.pretrain) j["pretrain"] = to_json(*c.pretrain);
    return j;
}

/// Relative paths inside the file are taken relative to the working directory.
inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    try {
        if (j.contains("out")) c.out = j.at("out").get<std::string>();
        if (j.contains("cohort")) c.cohort = j.at("cohort").get<std::string>();
        c.preset = j.value("preset", c.preset);
        c.padding_fraction = j.value("padding_fraction", c.padding_fraction);
        if (j.contains("crop_dims") && !j.at("crop_dims").is_null())
            c.crop_dims = j.at("crop_dims").get<std::array<std::int64_t, 3>>();
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
        if (j.contains("pretrain")) c.pretrain = train_config_from_json(j.at("pretrain"));
        c.sweep = j.value("sweep", c.sweep);
        c.suvmax_percent = j.value("suvmax_percent", c.suvmax_percent);
        if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
        c.fp64 = j.value("fp64", c.fp64);
        if (j.contains("phantom")) c.phantom = phantom::params_from_json(j.at("phantom"));
        c.n_cases = j.value("n_cases", c.n_cases);
        c.set_seed(j.value("seed", c.seed));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    try {
        return config_from_json(io::read_json(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------------------------
// Cohort manifest and split files

struct ManifestEntry {
    std::string id;
    CaseRole role = CaseRole::RelapseTask;
    fs::path ct, pet, gtv, brain;
    std::optional<fs::path> relapse;
};

struct Manifest {
    std::vector<ManifestEntry> cases;

    const ManifestEntry& at(const std::string& id) const {
        for (const auto& e : cases)
            if (e.id == id) return e;
        throw ValidationError("cohort manifest has no case '" + id + "'");
    }
    std::vector<std::string> ids(CaseRole role) const {
        std::vector<std::string> v;
        for (const auto& e : cases)
            if (e.role == role) v.push_back(e.id);
        return v;
    }
};

/// Paths are stored relative to the manifest's directory.
inline void write_manifest(const fs::path& path, const Manifest& m) {
    json arr = json::array();
    for (const auto& e : m.cases) {
        json paths{{"ct", e.ct.string()},
                   {"pet", e.pet.string()},
                   {"gtv", e.gtv.string()},
                   {"brain", e.brain.string()}};
        if (e.relapse) paths["relapse"] = e.relapse->string();
        arr.push_back({{"id", e.id}, {"role", to_string(e.role)}, {"paths", paths}});
    }
    io::write_json(path, json{{"cases", arr}});
}

inline Manifest read_manifest(const fs::path& path) {
    const json j = io::read_json(path);
    const fs::path base = path.parent_path();
    Manifest m;
    try {
        for (const auto& c : j.at("cases")) {
            ManifestEntry e;
            e.id = c.at("id").get<std::string>();
            e.role = parse_role(c.at("role").get<std::string>());
            const auto& p = c.at("paths");
            e.ct = base / p.at("ct").get<std::string>();
            e.pet = base / p.at("pet").get<std::string>();
            e.gtv = base / p.at("gtv").get<std::string>();
            e.brain = base / p.at("brain").get<std::string>();
            if (p.contains("relapse")) e.relapse = base / p.at("relapse").get<std::string>();
            if (e.role == CaseRole::RelapseTask && !e.relapse)
                throw IoError(path.string(), "case '" + e.id + "' has no relapse mask");
            m.cases.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw IoError(path.string(), std::string("malformed cohort manifest: ") + e.what());
    } catch (const ValidationError& e) {
        throw IoError(path.string(), e.what());
    }
    return m;
}

/// Reads a case from disk and brings every image onto the CT grid.
inline PatientCase load_case(const ManifestEntry& e) {
    PatientCase c;
    c.id = e.id;
    c.role = e.role;
    c.ct = io::read_volume(e.ct);
    c.pet = io::read_volume(e.pet);
    c.gtv = io::read_mask(e.gtv);
    c.brain = io::read_mask(e.brain);
    if (e.relapse) c.relapse = io::read_mask(*e.relapse);
    return ingest_case(std::move(c));
}

inline void write_split(const fs::path& path, const CohortSplit& s) {
    io::write_json(path, json{{"seed", s.seed}, {"train", s.train}, {"val", s.val}, {"test", s.test}});
}

inline CohortSplit read_split(const fs::path& path) {
    const json j = io::read_json(path);
    CohortSplit s;
    try {
        s.seed = j.at("seed").get<std::uint64_t>();
        s.train = j.at("train").get<std::vector<std::string>>();
        s.val = j.at("val").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw IoError(path.string(), std::string("malformed split file: ") + e.what());
    }
    return s;
}

// ---------------------------------------------------------------------------------------------
// Output layout

struct Layout {
    fs::path out;

    fs::path cases_dir() const { return out / "cases"; }
    fs::path split() const { return out / "split.json"; }
    fs::path answer_key() const { return out / "answer_key.json"; }
    fs::path pre_dir() const { return out / "preprocessed"; }
    fs::path crop() const { return pre_dir() / "crop.json"; }
    fs::path pre_stem(const std::string& id, const char* what) const {
        return pre_dir() / (id + "_" + what);
    }
    fs::path models() const { return out / "models"; }
    fs::path model(const std::string& name) const { return models() / name; }
    fs::path selection() const { return out / "selection.json"; }
    fs::path history(const std::string& run) const { return out / ("history_" + run + ".csv"); }
    fs::path sweep_csv() const { return out / "sweep.csv"; }
    fs::path sweep_json() const { return out / "sweep.json"; }
    fs::path prediction(const std::string& id, const std::string& method) const {
        return out / "predictions" / (id + "_" + method);
    }
    fs::path report_json() const { return out / "report.json"; }
    fs::path report_txt() const { return out / "report.txt"; }
};

inline void require_file(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw IoError(p.string(), "missing; run `" + hint + "` first");
}

// ---------------------------------------------------------------------------------------------
// phantom

/// Writes the cohort VF32 files, the manifest and the answer key under `out`.
inline void cmd_phantom(const phantom::PhantomParams& prm, int n, const fs::path& out,
                        const Logger& log = {}) {
    prm.validate();
    const Layout L{out};
    const auto cohort = phantom::generate_cohort(prm, n);
    Manifest m;
    json key = json::array();
    for (const auto& gc : cohort.cases) {
        const auto& pc = gc.patient;
        const std::string id = pc.id;
        auto rel = [&](const char* what) { return fs::path("cases") / (id + "_" + what); };
        ManifestEntry e{id, pc.role, rel("ct"), rel("pet"), rel("gtv"), rel("brain"), {}};
        io::write_volume(out / e.ct, pc.ct, io::VolumeKind::Ct);
        io::write_volume(out / e.pet, pc.pet, io::VolumeKind::Pet);
        io::write_mask(out / e.gtv, pc.gtv);
        io::write_mask(out / e.brain, pc.brain);
        if (pc.relapse) {
            e.relapse = rel("relapse");
            io::write_mask(out / *e.relapse, *pc.relapse);
        }
        m.cases.push_back(std::move(e));
        key.push_back(phantom::to_json(gc.key));
    }
    write_manifest(out / "cohort.json", m);
    io::write_json(L.answer_key(), json{{"params", phantom::to_json(prm)}, {"cases", key}});
    if (log)
        log("phantom: wrote " + std::to_string(n) + " relapse-task and " +
            std::to_string(prm.n_pretrain) + " pretrain-task cases to " + out.string());
}

// ---------------------------------------------------------------------------------------------
// split

inline CohortSplit cmd_split(const ExperimentConfig& cfg, const Logger& log = {}) {
    const auto m = read_manifest(cfg.cohort_path());
    const auto s = split_cohort(m.ids(CaseRole::RelapseTask), cfg.seed);
    write_split(Layout{cfg.out}.split(), s);
    if (log)
        log("split: " + std::to_string(s.train.size()) + " train / " +
            std::to_string(s.val.size()) + " val / " + std::to_string(s.test.size()) + " test");
    return s;
}

// ---------------------------------------------------------------------------------------------
// preprocess

struct CropInfo {
    CropSpec spec;
    int levels = 3;
    bool computed = true;
    std::map<std::string, Index3> centers;
};

inline CropInfo read_crop(const fs::path& path) {
    const json j = io::read_json(path);
    CropInfo c;
    try {
        c.spec.dims = j.at("dims").get<std::array<std::int64_t, 3>>();
        c.spec.padding_fraction = j.at("padding_fraction").get<double>();
        c.levels = j.at("levels").get<int>();
        c.computed = j.at("computed").get<bool>();
        for (const auto& [id, v] : j.at("centers").items()) c.centers[id] = v.get<Index3>();
    } catch (const json::exception& e) {
        throw IoError(path.string(), std::string("malformed crop file: ") + e.what());
    }
    return c;
}

/// Normalizes every case, fixes the crop box from the training and validation cases, and
/// writes the cropped network inputs and labels (relapse, or GTV for pretrain-task cases).
inline CropInfo cmd_preprocess(const ExperimentConfig& cfg, const Logger& log = {}) {
    const Layout L{cfg.out};
    require_file(L.split(), "split");
    const auto m = read_manifest(cfg.cohort_path());
    const auto split = read_split(L.split());
    const int levels = cfg.net().levels;

    std::map<std::string, PatientCase> cases;
    for (const auto& e : m.cases) cases.emplace(e.id, load_case(e));

    CropInfo info;
    info.levels = levels;
    if (cfg.crop_dims) {
        info.spec.dims = *cfg.crop_dims;
        info.spec.padding_fraction = cfg.padding_fraction;
        info.computed = false;
    } else {
        std::vector<const PatientCase*> fit;
        for (const auto* ids : {&split.train, &split.val})
            for (const auto& id : *ids) fit.push_back(&cases.at(id));
        info.spec = compute_crop_extent(fit, cfg.padding_fraction, levels);
    }
    info.spec.validate(levels);

    json centers = json::object();
    for (const auto& [id, raw] : cases) {
        const PatientCase n = normalize_case(raw);
        const auto a = assemble_input<float>(n, info.spec,
                                             n.relapse ? LabelSource::Relapse : LabelSource::Gtv);
        const std::int64_t vox = a.label.size();
        const std::span<const float> all(a.input.data);
        io::write_vf32(L.pre_stem(id, "ct"), a.crop_grid, all.subspan(0, vox), io::VolumeKind::Ct);
        io::write_vf32(L.pre_stem(id, "pet"), a.crop_grid, all.subspan(vox, vox),
                       io::VolumeKind::Pet);
        io::write_vf32(L.pre_stem(id, "label"), a.crop_grid, a.label.data, io::VolumeKind::Mask);
        info.centers[id] = a.center;
        centers[id] = a.center;
    }
    io::write_json(L.crop(), json{{"dims", info.spec.dims},
                                  {"padding_fraction", info.spec.padding_fraction},
                                  {"levels", levels},
                                  {"computed", info.computed},
                                  {"centers", centers}});
    if (log)
        log("preprocess: crop " + std::to_string(info.spec.dims[0]) + "x" +
            std::to_string(info.spec.dims[1]) + "x" + std::to_string(info.spec.dims[2]) +
            " voxels for " + std::to_string(cases.size()) + " cases");
    return info;
}

template <class T>
Sample<T> load_sample(const Layout& L, const std::string& id) {
    const auto ct = io::read_volume(L.pre_stem(id, "ct"));
    const auto pet = io::read_volume(L.pre_stem(id, "pet"));
    const auto lab = io::read_mask(L.pre_stem(id, "label"));
    require_same_grid(ct.grid, pet.grid, id.c_str());
    require_same_grid(ct.grid, lab.grid, id.c_str());
    const auto& d = ct.grid.dims;
    const auto n = static_cast<std::int64_t>(ct.data.size());
    Sample<T> s{id, ad::Tensor<T>({2, d[2], d[1], d[0]}), ad::Tensor<T>({1, d[2], d[1], d[0]})};
    for (std::int64_t i = 0; i < n; ++i) {
        s.input.data[i] = static_cast<T>(ct.data[i]);
        s.input.data[n + i] = static_cast<T>(pet.data[i]);
        s.label.data[i] = static_cast<T>(lab.data[i]);
    }
    return s;
}

template <class T>
std::vector<Sample<T>> load_samples(const Layout& L, const std::vector<std::string>& ids) {
    std::vector<Sample<T>> v;
    for (const auto& id : ids) v.push_back(load_sample<T>(L, id));
    return v;
}

// ---------------------------------------------------------------------------------------------
// train

namespace detail {

template <class T>
void save_run(const Layout& L, const std::string& name, const TrainResult<T>& r,
              const UNetConfig& net, int member) {
    ad::save_checkpoint(L.model(name), r.best.params,
                    json{{"levels", net.levels},
                         {"base_channels", net.base_channels},
                         {"best_val_dice", r.best_val_dice},
                         {"best_epoch", r.best_epoch},
                         {"member", member}});
    std::ofstream os(L.history(name));
    if (!os) throw IoError(L.history(name).string(), "cannot open for writing");
    write_history_csv(os, r.history);
}

inline json run_summary(const std::vector<EpochRecord>& h, double best, int epoch) {
    return {{"best_val_dice", best}, {"best_epoch", epoch}, {"epochs_run", h.size()}};
}

template <class T>
json save_ensemble(const Layout& L, const std::string& method, const EnsembleResult<T>& e,
                   const UNetConfig& net) {
    json members = json::array();
    for (std::size_t k = 0; k < e.members.size(); ++k) {
        const auto& r = e.members[k];
        const std::string run = method + "_m" + std::to_string(k);
        save_run(L, run, r, net, static_cast<int>(k));
        members.push_back(run_summary(r.history, r.best_val_dice, r.best_epoch));
    }
    const auto& b = e.best();
    ad::save_checkpoint(L.model(method), b.best.params,
                    json{{"levels", net.levels},
                         {"base_channels", net.base_channels},
                         {"best_val_dice", b.best_val_dice},
                         {"best_epoch", b.best_epoch},
                         {"member", e.best_index}});
    return {{"selected_member", e.best_index}, {"members", members}};
}

inline std::string epoch_line(const std::string& run, const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s epoch %d: loss %.4f, val Dice %.4f, lr %.3g", run.c_str(),
                  r.epoch, r.train_loss, r.val_dice, r.lr);
    return buf;
}

}  // namespace detail

template <class T>
UNet<T> load_model(const ExperimentConfig& cfg, const std::string& name) {
    const Layout L{cfg.out};
    require_file(fs::path(L.model(name).string() + ".json"), "train");
    UNet<T> net = build_unet<T>(cfg.net(), 0);
    ad::assign_from(net.params, ad::load_checkpoint(L.model(name)).params);
    return net;
}

/// Pretrain-task ids split into (train, val) with a seeded shuffle; val gets round(0.2 n), >= 1.
inline std::pair<std::vector<std::string>, std::vector<std::string>> pretrain_partition(
    std::vector<std::string> ids, std::uint64_t seed) {
    if (ids.size() < 2)
        throw ConfigError("pretraining needs at least 2 pretrain-task cases in the cohort");
    Rng rng(sub_seed(seed, "pretrain-split"));
    for (std::size_t i = ids.size(); i-- > 1;)
        std::swap(ids[i], ids[static_cast<std::size_t>(rng() % (i + 1))]);
    const auto n_val = static_cast<std::size_t>(
        std::max<std::int64_t>(1, round_half_up(0.2 * static_cast<double>(ids.size()))));
    return {std::vector<std::string>(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n_val)),
            std::vector<std::string>(ids.end() - static_cast<std::ptrdiff_t>(n_val), ids.end())};
}

template <class T>
json train_methods(const ExperimentConfig& cfg, const Logger& log) {
    const Layout L{cfg.out};
    require_file(L.crop(), "preprocess");
    const auto split = read_split(L.split());
    const auto tr = load_samples<T>(L, split.train);
    const auto va = load_samples<T>(L, split.val);
    const UNetConfig net = cfg.net();
    json selection = json::object();

    auto member_log = [&](const std::string& method) {
        return [&log, method](int k, const EpochRecord& r) {
            if (log) log(detail::epoch_line(method + "_m" + std::to_string(k), r));
        };
    };

    if (cfg.wants("ai_random")) {
        const auto e = train_random<T>(net, tr, va, cfg.train, member_log("ai_random"));
        selection["ai_random"] = detail::save_ensemble(L, "ai_random", e, net);
    }
    if (cfg.wants("ai_finetune")) {
        const auto m = read_manifest(cfg.cohort_path());
        const auto [ptr_ids, pva_ids] =
            pretrain_partition(m.ids(CaseRole::PretrainTask), cfg.seed);
        const auto ptr = load_samples<T>(L, ptr_ids);
        const auto pva = load_samples<T>(L, pva_ids);
        const auto pre = pretrain_tumour<T>(net, ptr, pva, cfg.pretrain_config(),
                                            [&log](const EpochRecord& r) {
                                                if (log) log(detail::epoch_line("pretrain", r));
                                            });
        detail::save_run(L, "pretrain", pre, net, 0);
        const auto e = finetune<T>(pre.best, tr, va, cfg.train, member_log("ai_finetune"));
        selection["pretrain"] = detail::run_summary(pre.history, pre.best_val_dice, pre.best_epoch);
        selection["ai_finetune"] = detail::save_ensemble(L, "ai_finetune", e, net);
    }
    return selection;
}

/// Trains the selected network methods and records which ensemble member was kept.
inline json cmd_train(const ExperimentConfig& cfg, const Logger& log = {}) {
    json selection = cfg.fp64 ? train_methods<double>(cfg, log) : train_methods<float>(cfg, log);
    selection["precision"] = cfg.fp64 ? "fp64" : "fp32";
    io::write_json(Layout{cfg.out}.selection(), selection);
    return selection;
}

// ---------------------------------------------------------------------------------------------
// sweep

/// Every image of a case cropped about the GTV centroid (CT filled with air, others with 0).
inline PatientCase crop_case(const PatientCase& c, const CropSpec& spec) {
    const Index3 ctr = mask_centroid_voxel(c.gtv);
    PatientCase out;
    out.id = c.id;
    out.role = c.role;
    out.ct = crop_centered(c.ct, ctr, spec.dims, -kCtClipHu);
    out.pet = crop_centered(c.pet, ctr, spec.dims, 0.0f);
    out.gtv = crop_centered(c.gtv, ctr, spec.dims, std::uint8_t{0});
    out.brain = crop_centered(c.brain, ctr, spec.dims, std::uint8_t{0});
    if (c.relapse) out.relapse = crop_centered(*c.relapse, ctr, spec.dims, std::uint8_t{0});
    out.meta = c.meta;
    return out;
}

/// SUVmax threshold sweep over the validation cases, each cropped to the network's box.
inline baselines::SuvSweepResult cmd_sweep(const ExperimentConfig& cfg, const Logger& log = {}) {
    const Layout L{cfg.out};
    require_file(L.crop(), "preprocess");
    const auto m = read_manifest(cfg.cohort_path());
    const auto split = read_split(L.split());
    const auto crop = read_crop(L.crop());

    std::vector<PatientCase> val;
    for (const auto& id : split.val) val.push_back(crop_case(load_case(m.at(id)), crop.spec));
    std::vector<const PatientCase*> ptrs;
    for (const auto& c : val) ptrs.push_back(&c);
    const auto r = baselines::suvmax_sweep(ptrs);

    std::ostringstream csv;
    csv << "percent,mean_dice\n";
    char buf[64];
    for (int p = 1; p <= 100; ++p) {
        std::snprintf(buf, sizeof buf, "%d,%.17g\n", p, r.mean_dice[static_cast<std::size_t>(p - 1)]);
        csv << buf;
    }
    io::write_text(L.sweep_csv(), csv.str());
    io::write_json(L.sweep_json(), json{{"best_percent", r.best_percent},
                                        {"best_mean_dice", r.best_dice()},
                                        {"cases", split.val}});
    if (log)
        log("sweep: best percent " + std::to_string(r.best_percent) + " (mean Dice " +
            std::to_string(r.best_dice()) + ")");
    return r;
}

// ---------------------------------------------------------------------------------------------
// predict / evaluate

template <class T>
void predict_networks(const ExperimentConfig& cfg, const Manifest& m, const CohortSplit& split,
                      const CropSpec& spec) {
    const Layout L{cfg.out};
    for (const char* method : {"ai_random", "ai_finetune"}) {
        if (!cfg.wants(method)) continue;
        const UNet<T> net = load_model<T>(cfg, method);
        for (const auto& id : split.test) {
            const auto c = normalize_case(load_case(m.at(id)));
            const auto p = predict_mask(net, c, spec, cfg.train.binarize_threshold);
            io::write_mask(L.prediction(id, method), p.mask);
        }
    }
}

/// Writes predictions/<case>_<method>.vf32 for every test case and selected method. All model
/// selection (ensemble choice, sweep percent) is read from earlier stages; test labels are not
/// opened here.
inline void cmd_predict(const ExperimentConfig& cfg, const Logger& log = {}) {
    const Layout L{cfg.out};
    require_file(L.crop(), "preprocess");
    const auto m = read_manifest(cfg.cohort_path());
    const auto split = read_split(L.split());
    const auto crop = read_crop(L.crop());

    int percent = cfg.suvmax_percent;
    if (cfg.wants("suvmax") && cfg.sweep) {
        require_file(L.sweep_json(), "sweep");
        percent = io::read_json(L.sweep_json()).at("best_percent").get<int>();
    }
    if (cfg.wants("ai_random") || cfg.wants("ai_finetune")) {
        if (cfg.fp64) predict_networks<double>(cfg, m, split, crop.spec);
        else predict_networks<float>(cfg, m, split, crop.spec);
    }
    for (const auto& id : split.test) {
        ManifestEntry e = m.at(id);
        e.relapse.reset();
        const auto c = load_case(e);
        if (cfg.wants("suvmax")) {
            const auto cc = crop_case(c, crop.spec);
            const auto pred = baselines::suvmax_threshold_predict(cc.pet, cc.gtv, cc.brain, percent);
            io::write_mask(L.prediction(id, "suvmax"),
                           uncrop_centered(pred, c.ct.grid, mask_centroid_voxel(c.gtv),
                                           std::uint8_t{0}));
        }
        if (cfg.wants("gtv")) io::write_mask(L.prediction(id, "gtv"), baselines::gtv_baseline_predict(c));
    }
    if (log) log("predict: " + std::to_string(split.test.size()) + " test cases");
}

/// Runs predict, then scores every selected method on the test cases.
inline analysis::Report cmd_evaluate(const ExperimentConfig& cfg, const Logger& log = {}) {
    cmd_predict(cfg, log);
    const Layout L{cfg.out};
    const auto m = read_manifest(cfg.cohort_path());
    const auto split = read_split(L.split());

    std::map<std::string, Mask3D> gt;
    std::map<std::string, std::vector<analysis::PointOfOrigin>> pos;
    for (const auto& id : split.test) {
        const auto c = load_case(m.at(id));
        pos[id] = analysis::points_of_origin(*c.relapse);
        gt.emplace(id, *c.relapse);
    }
    std::vector<analysis::MethodReport> reports;
    for (const auto& method : known_methods()) {
        if (!cfg.wants(method)) continue;
        std::vector<analysis::CaseEvaluation> ev;
        for (const auto& id : split.test)
            ev.push_back(analysis::evaluate_case(id, io::read_mask(L.prediction(id, method)),
                                                 gt.at(id), pos.at(id)));
        reports.push_back(analysis::summarize_method(method, std::move(ev)));
    }
    const auto report = analysis::build_report(std::move(reports));
    io::write_json(L.report_json(), analysis::to_json(report));
    io::write_text(L.report_txt(), analysis::to_text(report));
    if (log) log("evaluate: wrote " + L.report_json().string() + " and " + L.report_txt().string());
    return report;
}

/// phantom (when the manifest is missing), split, preprocess, train, sweep and evaluate.
inline analysis::Report run_all(const ExperimentConfig& cfg, const Logger& log = {}) {
    cfg.validate();
    if (!fs::exists(cfg.cohort_path())) cmd_phantom(cfg.phantom, cfg.n_cases, cfg.out, log);
    cmd_split(cfg, log);
    cmd_preprocess(cfg, log);
    if (cfg.wants("ai_random") || cfg.wants("ai_finetune")) cmd_train(cfg, log);
    if (cfg.wants("suvmax") && cfg.sweep) cmd_sweep(cfg, log);
    return cmd_evaluate(cfg, log);
}

}  // namespace lrr::pipeline
