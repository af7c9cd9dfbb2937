// fedpake: config-driven federated-learning experiments.
//
//   fedpake run     --config exp.cfg [--out DIR] [--seed N] [--dump-diagnostics]
//   fedpake sweep   --config exp.cfg [--out DIR] [--seed N]
//   fedpake inspect --config exp.cfg --round T [--out DIR] [--seed N]
//                   [--hist-layer NAME --hist-begin A --hist-end B --hist-bins N]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedpake/experiment.hpp"

namespace {

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config, "Experiment config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "Output directory (overrides out_dir)");
    cmd->add_option("--seed", opts.seed, "Master seed (overrides seed)");
}

fedpake::ExperimentConfig load(const CommonOptions& opts) {
    auto cfg = fedpake::parse_config(opts.config);
    if (!opts.out.empty()) cfg.out_dir = opts.out;
    if (opts.seed) cfg.federation.seed = *opts.seed;
    return cfg;
}

fedpake::PreparedExperiment prepare(const fedpake::ExperimentConfig& cfg) {
    auto prepared = fedpake::prepare_experiment(cfg);
    if (prepared.skipped_nan_rows)
        std::cerr << "warning: skipped " << prepared.skipped_nan_rows << " CSV rows containing NaN\n";
    return prepared;
}

int run(const CommonOptions& opts, bool dump) {
    const auto cfg = load(opts);
    const auto prepared = prepare(cfg);
    fedpake::RoundObserver observer;
    const std::string diag_dir = (std::filesystem::path(cfg.out_dir) / "diagnostics").string();
    if (dump) observer = [&](const fedpake::RoundTrace& t) { fedpake::dump_round(t, diag_dir); };
    const auto result = fedpake::run_experiment(cfg.federation, prepared.arch, prepared.data, observer);
    const auto path = fedpake::write_metrics(result, cfg.out_dir);
    fedpake::save_checkpoint((std::filesystem::path(cfg.out_dir) / "final_model.ckpt").string(), result.final_model);
    if (cfg.federation.per_layer_sd) fedpake::write_layer_sd(result, result.final_model, cfg.out_dir);
    std::cout << "strategy=" << fedpake::to_string(cfg.federation.strategy)
              << " final_accuracy=" << fedpake::format_double(result.final_accuracy) << " metrics=" << path << '\n';
    return 0;
}

int sweep(const CommonOptions& opts) {
    const auto cfg = load(opts);
    const auto prepared = prepare(cfg);
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream index(std::filesystem::path(cfg.out_dir) / "index.csv", std::ios::binary);
    if (!index) throw fedpake::Error("cannot write index.csv under '" + cfg.out_dir + "'");
    index << "point,lambda,micro_classes,macro_classes,final_accuracy,metrics\n";
    for (const auto& p : fedpake::sweep_points(cfg)) {
        auto fed = cfg.federation;
        fed.fedpake.lambda = p.lambda;
        fed.fedpake.micro_classes = p.micro_classes;
        fed.fedpake.macro_classes = p.macro_classes;
        const auto name = fedpake::sweep_point_name(p);
        const auto result = fedpake::run_experiment(fed, prepared.arch, prepared.data);
        const auto path = fedpake::write_metrics(result, (std::filesystem::path(cfg.out_dir) / name).string());
        index << name << ',' << fedpake::format_double(p.lambda) << ',' << p.micro_classes << ',' << p.macro_classes
              << ',' << fedpake::format_double(result.final_accuracy) << ',' << name << "/metrics.csv\n";
        std::cout << name << " final_accuracy=" << fedpake::format_double(result.final_accuracy) << '\n';
    }
    return 0;
}

struct InspectOptions {
    std::size_t round = 1;
    fedpake::HistogramSelection hist;
};

int inspect(const CommonOptions& opts, const InspectOptions& io) {
    auto cfg = load(opts);
    if (io.round == 0 || io.round > cfg.federation.rounds)
        throw fedpake::Error("--round must lie in [1, " + std::to_string(cfg.federation.rounds) + "]");
    cfg.federation.rounds = io.round;
    cfg.federation.eval_tail = std::min(cfg.federation.eval_tail, io.round);
    const auto prepared = prepare(cfg);
    const std::string dir = (std::filesystem::path(cfg.out_dir) / "diagnostics").string();
    bool hist_written = false;
    fedpake::run_experiment(cfg.federation, prepared.arch, prepared.data, [&](const fedpake::RoundTrace& t) {
        if (t.round != io.round) return;
        fedpake::dump_round(t, dir);
        if (!io.hist.layer.empty()) {
            char name[32];
            std::snprintf(name, sizeof name, "round_%04zu", t.round);
            auto path = fedpake::write_param_histogram(t.locals, *t.aggregated, io.hist,
                                                       (std::filesystem::path(dir) / name).string());
            std::cout << "histogram=" << path << '\n';
            hist_written = true;
        }
    });
    std::cout << "diagnostics=" << dir << '\n';
    return io.hist.layer.empty() || hist_written ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator with parameter-skew-aware aggregation"};
    app.require_subcommand(1);

    CommonOptions run_opts, sweep_opts, inspect_opts;
    bool dump = false;
    auto* run_cmd = app.add_subcommand("run", "Run one experiment and write metrics.csv");
    add_common(run_cmd, run_opts);
    run_cmd->add_flag("--dump-diagnostics", dump, "Dump per-round models and aggregation intermediates");

    auto* sweep_cmd = app.add_subcommand("sweep", "Grid over lambda / micro_classes / macro_classes");
    add_common(sweep_cmd, sweep_opts);

    InspectOptions io;
    auto* inspect_cmd = app.add_subcommand("inspect", "Dump aggregation diagnostics for one round");
    add_common(inspect_cmd, inspect_opts);
    inspect_cmd->add_option("--round", io.round, "Round to inspect (1-based)")->required();
    inspect_cmd->add_option("--hist-layer", io.hist.layer, "Layer for the parameter histogram");
    inspect_cmd->add_option("--hist-begin", io.hist.begin, "First position (inclusive)");
    inspect_cmd->add_option("--hist-end", io.hist.end, "Last position (exclusive)");
    inspect_cmd->add_option("--hist-bins", io.hist.bins, "Number of bins");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run_cmd) return run(run_opts, dump);
        if (*sweep_cmd) return sweep(sweep_opts);
        if (*inspect_cmd) return inspect(inspect_opts, io);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
