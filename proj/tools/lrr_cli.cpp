// Command-line driver for the relapse-prediction experiment pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lrr/pipeline.hpp"

namespace {

using namespace lrr;
namespace fs = std::filesystem;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string preset;
    std::string methods;
    bool fp64 = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
    app->add_option("--config", f.config, "Experiment configuration (JSON)");
    app->add_option("--seed", f.seed, "Global seed; overrides the configuration");
    app->add_option("--out", f.out, "Output directory; overrides the configuration");
    app->add_option("--preset", f.preset, "Network preset")->check(CLI::IsMember({"desk", "clinical"}));
    app->add_option("--methods", f.methods,
                    "Comma-separated subset of ai_random,ai_finetune,suvmax,gtv");
    app->add_flag("--fp64", f.fp64, "Train and predict in 64-bit floating point");
}

pipeline::ExperimentConfig resolve(const CommonFlags& f) {
    auto cfg = f.config.empty() ? pipeline::ExperimentConfig{} : pipeline::load_config(f.config);
    if (f.seed) cfg.set_seed(*f.seed);
    if (!f.out.empty()) cfg.out = f.out;
    if (!f.preset.empty()) cfg.preset = f.preset;
    if (!f.methods.empty()) cfg.methods = pipeline::parse_methods(f.methods);
    if (f.fp64) cfg.fp64 = true;
    cfg.validate();
    return cfg;
}

void log_line(const std::string& s) {
    std::cerr << s << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Voxel-level relapse prediction from PET/CT: U-Net, SUVmax and GTV baselines"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic cohort");
    std::string params_file;
    std::optional<int> n_cases;
    phantom->add_option("--params", params_file, "Phantom parameters (JSON)");
    phantom->add_option("--n", n_cases, "Number of relapse-task cases")->check(CLI::Range(3, 100000));
    auto* split = app.add_subcommand("split", "Partition the cohort 6:2:2");
    auto* preprocess = app.add_subcommand("preprocess", "Normalize and crop network inputs");
    auto* train = app.add_subcommand("train", "Train the AI random / AI finetune ensembles");
    auto* sweep = app.add_subcommand("sweep", "SUVmax threshold sweep on the validation cases");
    auto* predict = app.add_subcommand("predict", "Write test-set predictions for every method");
    auto* evaluate = app.add_subcommand("evaluate", "Predict and write report.json / report.txt");
    auto* run = app.add_subcommand("run", "Every stage in order");
    for (auto* sc : {phantom, split, preprocess, train, sweep, predict, evaluate, run})
        add_common(sc, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = resolve(flags);
        if (phantom->parsed()) {
            if (!params_file.empty()) {
                const auto seed = cfg.phantom.seed;
                cfg.phantom = phantom::params_from_json(io::read_json(params_file));
                if (flags.seed || !flags.config.empty()) cfg.phantom.seed = seed;
            }
            pipeline::cmd_phantom(cfg.phantom, n_cases.value_or(cfg.n_cases), cfg.out, log_line);
        } else if (split->parsed()) {
            pipeline::cmd_split(cfg, log_line);
        } else if (preprocess->parsed()) {
            pipeline::cmd_preprocess(cfg, log_line);
        } else if (train->parsed()) {
            pipeline::cmd_train(cfg, log_line);
        } else if (sweep->parsed()) {
            pipeline::cmd_sweep(cfg, log_line);
        } else if (predict->parsed()) {
            pipeline::cmd_predict(cfg, log_line);
        } else if (evaluate->parsed()) {
            std::cout << analysis::to_text(pipeline::cmd_evaluate(cfg, log_line));
        } else if (run->parsed()) {
            std::cout << analysis::to_text(pipeline::run_all(cfg, log_line));
        }
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
