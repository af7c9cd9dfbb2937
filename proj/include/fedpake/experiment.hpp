#pragma once

/// @file experiment.hpp
/// @brief Experiment configuration files, data preparation, and the metrics,
/// histogram and diagnostics writers used by the `fedpake` tool.
///
/// Config files are line-oriented `key = value` text; `#` starts a comment.
/// Every key is listed in `config_keys()`; unknown keys are rejected.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedpake/checkpoint.hpp"
#include "fedpake/data.hpp"
#include "fedpake/federation.hpp"
#include "fedpake/model.hpp"

namespace fedpake {

enum class DatasetKind { synthetic, csv };
enum class PartitionKind { iid, pathological, dirichlet };

struct DataConfig {
    DatasetKind kind = DatasetKind::synthetic;
    int num_classes = 4;
    std::size_t samples_per_class = 2500;
    std::size_t dim = 8;
    double class_separation = 3.0;
    std::string csv_path;
    std::string csv_label_column = "label";
    double test_fraction = 0.25;
    PartitionKind partition = PartitionKind::dirichlet;
    double dirichlet_beta = 0.1;
    std::size_t classes_per_client = 2;
    std::size_t min_samples_per_client = 1;
};

struct ModelConfig {
    std::vector<std::size_t> hidden{32};
    Activation activation = Activation::relu;
};

/// Axes of a `sweep`; an empty axis keeps the base config's value.
struct SweepGrid {
    std::vector<double> lambda;
    std::vector<int> micro_classes;
    std::vector<int> macro_classes;
};

struct ExperimentConfig {
    FederationConfig federation;
    DataConfig data;
    ModelConfig model;
    std::string out_dir = "out";
    SweepGrid sweep;

    ExperimentConfig() { federation.local.prox_mu = 0.001; }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void bad_value(const std::string& key, const std::string& expected, const std::string& got) {
    throw Error("config key '" + key + "': expected " + expected + ", got '" + got + "'");
}

inline double to_real(const std::string& key, const std::string& v) {
    try {
        const double d = parse_double(v);
        if (!std::isfinite(d)) bad_value(key, "a finite number", v);
        return d;
    } catch (const Error&) {
        bad_value(key, "a number", v);
    }
}

inline unsigned long long to_unsigned(const std::string& key, const std::string& v) {
    unsigned long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || p != v.data() + v.size()) bad_value(key, "a non-negative integer", v);
    return out;
}

inline int to_int(const std::string& key, const std::string& v) {
    const auto u = to_unsigned(key, v);
    if (u > 1'000'000'000ULL) bad_value(key, "a reasonably sized integer", v);
    return static_cast<int>(u);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, "true or false", v);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

template <class E>
E to_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
    std::string names;
    for (const auto& [name, value] : options) {
        if (v == name) return value;
        names += names.empty() ? name : std::string("|") + name;
    }
    bad_value(key, "one of " + names, v);
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& config_setters() {
    static const std::map<std::string, Setter> table = {
        // federation
        {"num_clients", [](auto& c, auto& k, auto& v) { c.federation.num_clients = to_unsigned(k, v); }},
        {"join_ratio", [](auto& c, auto& k, auto& v) { c.federation.join_ratio = to_real(k, v); }},
        {"rounds", [](auto& c, auto& k, auto& v) { c.federation.rounds = to_unsigned(k, v); }},
        {"strategy",
         [](auto& c, auto& k, auto& v) {
             c.federation.strategy = to_enum<Strategy>(
                 k, v, {{"fedavg", Strategy::fedavg}, {"fedprox", Strategy::fedprox}, {"fedpake", Strategy::fedpake}});
         }},
        {"eval_tail", [](auto& c, auto& k, auto& v) { c.federation.eval_tail = to_unsigned(k, v); }},
        {"seed", [](auto& c, auto& k, auto& v) { c.federation.seed = to_unsigned(k, v); }},
        {"per_layer_sd", [](auto& c, auto& k, auto& v) { c.federation.per_layer_sd = to_bool(k, v); }},
        {"threads", [](auto& c, auto& k, auto& v) { c.federation.threads = to_unsigned(k, v); }},
        // aggregation
        {"lambda", [](auto& c, auto& k, auto& v) { c.federation.fedpake.lambda = to_real(k, v); }},
        {"micro_classes", [](auto& c, auto& k, auto& v) { c.federation.fedpake.micro_classes = to_int(k, v); }},
        {"macro_classes", [](auto& c, auto& k, auto& v) { c.federation.fedpake.macro_classes = to_int(k, v); }},
        {"delta", [](auto& c, auto& k, auto& v) { c.federation.fedpake.delta = to_real(k, v); }},
        {"delta_early_stop", [](auto& c, auto& k, auto& v) { c.federation.fedpake.delta_early_stop = to_bool(k, v); }},
        {"renormalize_weights",
         [](auto& c, auto& k, auto& v) { c.federation.fedpake.renormalize_weights = to_bool(k, v); }},
        {"sqdev_normalization",
         [](auto& c, auto& k, auto& v) {
             c.federation.fedpake.sqdev_normalization = to_enum<SqDevNormalization>(
                 k, v,
                 {{"per_layer_max", SqDevNormalization::per_layer_max},
                  {"per_position_max", SqDevNormalization::per_position_max}});
         }},
        // local training
        {"learning_rate", [](auto& c, auto& k, auto& v) { c.federation.local.learning_rate = to_real(k, v); }},
        {"batch_size", [](auto& c, auto& k, auto& v) { c.federation.local.batch_size = to_unsigned(k, v); }},
        {"local_epochs", [](auto& c, auto& k, auto& v) { c.federation.local.local_epochs = to_unsigned(k, v); }},
        {"prox_mu", [](auto& c, auto& k, auto& v) { c.federation.local.prox_mu = to_real(k, v); }},
        // model
        {"hidden",
         [](auto& c, auto& k, auto& v) {
             c.model.hidden.clear();
             if (v.empty() || v == "none") return;
             for (const auto& item : split_list(v)) c.model.hidden.push_back(to_unsigned(k, item));
         }},
        {"activation",
         [](auto& c, auto& k, auto& v) {
             c.model.activation = to_enum<Activation>(k, v, {{"relu", Activation::relu}, {"tanh", Activation::tanh}});
         }},
        // data
        {"dataset",
         [](auto& c, auto& k, auto& v) {
             c.data.kind = to_enum<DatasetKind>(k, v, {{"synthetic", DatasetKind::synthetic}, {"csv", DatasetKind::csv}});
         }},
        {"num_classes", [](auto& c, auto& k, auto& v) { c.data.num_classes = to_int(k, v); }},
        {"samples_per_class", [](auto& c, auto& k, auto& v) { c.data.samples_per_class = to_unsigned(k, v); }},
        {"dim", [](auto& c, auto& k, auto& v) { c.data.dim = to_unsigned(k, v); }},
        {"class_separation", [](auto& c, auto& k, auto& v) { c.data.class_separation = to_real(k, v); }},
        {"csv_path", [](auto& c, auto&, auto& v) { c.data.csv_path = v; }},
        {"csv_label_column", [](auto& c, auto&, auto& v) { c.data.csv_label_column = v; }},
        {"test_fraction", [](auto& c, auto& k, auto& v) { c.data.test_fraction = to_real(k, v); }},
        {"partition",
         [](auto& c, auto& k, auto& v) {
             c.data.partition = to_enum<PartitionKind>(k, v,
                                                       {{"iid", PartitionKind::iid},
                                                        {"pathological", PartitionKind::pathological},
                                                        {"dirichlet", PartitionKind::dirichlet}});
         }},
        {"dirichlet_beta", [](auto& c, auto& k, auto& v) { c.data.dirichlet_beta = to_real(k, v); }},
        {"classes_per_client", [](auto& c, auto& k, auto& v) { c.data.classes_per_client = to_unsigned(k, v); }},
        {"min_samples_per_client", [](auto& c, auto& k, auto& v) { c.data.min_samples_per_client = to_unsigned(k, v); }},
        // output and sweep axes
        {"out_dir", [](auto& c, auto&, auto& v) { c.out_dir = v; }},
        {"sweep.lambda",
         [](auto& c, auto& k, auto& v) {
             for (const auto& item : split_list(v)) c.sweep.lambda.push_back(to_real(k, item));
         }},
        {"sweep.micro_classes",
         [](auto& c, auto& k, auto& v) {
             for (const auto& item : split_list(v)) c.sweep.micro_classes.push_back(to_int(k, item));
         }},
        {"sweep.macro_classes",
         [](auto& c, auto& k, auto& v) {
             for (const auto& item : split_list(v)) c.sweep.macro_classes.push_back(to_int(k, item));
         }},
    };
    return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : detail::config_setters()) keys.push_back(k);
    return keys;
}

inline const std::vector<std::string>& required_config_keys() {
    static const std::vector<std::string> keys = {"strategy", "num_clients", "rounds"};
    return keys;
}

inline void validate_config(const ExperimentConfig& cfg) {
    cfg.federation.validate();
    const auto& d = cfg.data;
    if (d.kind == DatasetKind::synthetic) {
        if (d.num_classes < 2) throw Error("config key 'num_classes': must be >= 2");
        if (d.samples_per_class == 0) throw Error("config key 'samples_per_class': must be positive");
        if (d.dim == 0) throw Error("config key 'dim': must be positive");
        if (d.class_separation < 0.0) throw Error("config key 'class_separation': must be >= 0");
    } else if (d.csv_path.empty()) {
        throw Error("config key 'csv_path': required when dataset = csv");
    }
    if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) throw Error("config key 'test_fraction': must lie in (0,1)");
    if (!(d.dirichlet_beta > 0.0)) throw Error("config key 'dirichlet_beta': must be positive");
    if (d.classes_per_client == 0) throw Error("config key 'classes_per_client': must be positive");
    for (auto h : cfg.model.hidden)
        if (h == 0) throw Error("config key 'hidden': layer sizes must be positive");
    for (double l : cfg.sweep.lambda)
        if (!(l >= 0.0 && l <= 1.0)) throw Error("config key 'sweep.lambda': values must lie in [0,1]");
    for (int c : cfg.sweep.micro_classes)
        if (c < 1) throw Error("config key 'sweep.micro_classes': values must be >= 1");
    for (int s : cfg.sweep.macro_classes)
        if (s < 1 || static_cast<std::size_t>(s) > cfg.federation.num_clients)
            throw Error("config key 'sweep.macro_classes': values must lie in [1, num_clients]");
}

/// Parses and validates config text. Either returns a complete config or throws
/// an Error naming the offending key (or line).
inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    const auto& setters = detail::config_setters();
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("config line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end()) throw Error("config key '" + key + "': unknown key");
        if (!seen.insert(key).second) throw Error("config key '" + key + "': given more than once");
        it->second(cfg, key, value);
    }
    for (const auto& k : required_config_keys())
        if (!seen.count(k)) throw Error("config key '" + k + "': missing required key");
    if (!seen.count("eval_tail")) cfg.federation.eval_tail = std::min<std::size_t>(10, cfg.federation.rounds);
    validate_config(cfg);
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedExperiment {
    FederationData data;
    MLPSpec arch;
    std::size_t skipped_nan_rows = 0;
};

/// Builds the dataset, the train/test split, the client partition and the MLP
/// architecture, all from seeds derived from the master seed.
inline PreparedExperiment prepare_experiment(const ExperimentConfig& cfg) {
    const auto seed = cfg.federation.seed;
    const auto& d = cfg.data;
    PreparedExperiment out;
    Dataset full;
    if (d.kind == DatasetKind::synthetic) {
        full = gen_synthetic(d.num_classes, d.samples_per_class, d.dim, d.class_separation, derive_seed(seed, "data"));
    } else {
        auto loaded = load_csv_dataset(d.csv_path, d.csv_label_column);
        out.skipped_nan_rows = loaded.skipped_nan_rows;
        full = std::move(loaded.dataset);
    }
    auto split = train_test_split(full, d.test_fraction, derive_seed(seed, "split"));
    const auto n = cfg.federation.num_clients;
    const auto part_seed = derive_seed(seed, "partition");
    PartitionPlan plan;
    switch (d.partition) {
        case PartitionKind::iid: plan = partition_iid(split.train, n, part_seed); break;
        case PartitionKind::pathological:
            plan = partition_pathological(split.train, n, d.classes_per_client, part_seed);
            break;
        case PartitionKind::dirichlet:
            plan = partition_dirichlet(split.train, {d.dirichlet_beta, n, part_seed, d.min_samples_per_client});
            break;
    }
    out.data = FederationData::from_plan(split.train, plan, std::move(split.test));
    out.arch.layer_sizes.push_back(full.dim());
    for (auto h : cfg.model.hidden) out.arch.layer_sizes.push_back(h);
    out.arch.layer_sizes.push_back(static_cast<std::size_t>(full.num_classes));
    out.arch.activation = cfg.model.activation;
    return out;
}

// ---------------------------------------------------------------------------
// Metrics CSV

inline constexpr const char* kMetricsHeader = "round,mean_train_loss,test_accuracy,sd_mean,sd_max,sd_min,participants";

inline void write_metrics(std::ostream& os, const ExperimentResult& result) {
    os << kMetricsHeader << '\n';
    for (const auto& r : result.records) {
        os << r.round << ',' << format_double(r.mean_train_loss) << ',' << format_double(r.test_accuracy) << ','
           << format_double(r.sd_mean) << ',' << format_double(r.sd_max) << ',' << format_double(r.sd_min) << ',';
        for (std::size_t i = 0; i < r.participating.size(); ++i) os << (i ? ";" : "") << r.participating[i];
        os << '\n';
    }
    os << "final_accuracy," << format_double(result.final_accuracy) << '\n';
}

/// Writes `<dir>/metrics.csv` and returns its path.
inline std::string write_metrics(const ExperimentResult& result, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / "metrics.csv").string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_metrics(os, result);
    if (!os) throw Error("write failed: '" + path + "'");
    return path;
}

struct MetricsFile {
    std::vector<RoundRecord> records;
    double final_accuracy = 0.0;
};

inline MetricsFile read_metrics(std::istream& is) {
    MetricsFile out;
    std::string line;
    if (!std::getline(is, line) || line != kMetricsHeader) throw Error("metrics: bad header");
    bool summary = false;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (summary) throw Error("metrics line " + std::to_string(line_no) + ": data after summary");
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        try {
            if (cells.size() == 2 && cells[0] == "final_accuracy") {
                out.final_accuracy = parse_double(cells[1]);
                summary = true;
                continue;
            }
            if (cells.size() != 7) throw Error("expected 7 fields");
            RoundRecord r;
            r.round = detail::to_unsigned("round", cells[0]);
            r.mean_train_loss = parse_double(cells[1]);
            r.test_accuracy = parse_double(cells[2]);
            r.sd_mean = parse_double(cells[3]);
            r.sd_max = parse_double(cells[4]);
            r.sd_min = parse_double(cells[5]);
            std::stringstream ps(cells[6]);
            std::string id;
            while (std::getline(ps, id, ';'))
                r.participating.push_back(static_cast<ClientId>(detail::to_unsigned("participants", id)));
            out.records.push_back(std::move(r));
        } catch (const Error& e) {
            throw Error("metrics line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!summary) throw Error("metrics: missing final_accuracy summary line");
    return out;
}

inline MetricsFile read_metrics(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_metrics(is);
}

// ---------------------------------------------------------------------------
// Parameter-distribution histogram

struct HistogramSelection {
    std::string layer;
    std::size_t begin = 0;  // first position (inclusive)
    std::size_t end = 0;    // one past the last position
    std::size_t bins = 10;
};

/// Per selected position: equal-width bins over [min, max] of the client values
/// (last bin closed), the count of clients in each, and the global value.
/// Columns: position,bin,edge_lo,edge_hi,count,global_value
inline void write_param_histogram(std::ostream& os, std::span<const ModelParams> models, const ModelParams& global,
                                  const HistogramSelection& sel) {
    if (models.empty()) throw Error("histogram: no client models");
    if (sel.bins == 0) throw Error("histogram: bins must be positive");
    const LayerTensor* g = global.find(sel.layer);
    if (!g) throw Error("histogram: no layer named '" + sel.layer + "'");
    if (sel.begin >= sel.end || sel.end > g->values.size())
        throw Error("histogram: position range [" + std::to_string(sel.begin) + ", " + std::to_string(sel.end) +
                    ") outside layer '" + sel.layer + "' of size " + std::to_string(g->values.size()));
    std::vector<const LayerTensor*> layers;
    for (const auto& m : models) {
        const LayerTensor* l = m.find(sel.layer);
        if (!l || l->values.size() != g->values.size())
            throw Error("histogram: client model lacks a matching layer '" + sel.layer + "'");
        layers.push_back(l);
    }

    os << "position,bin,edge_lo,edge_hi,count,global_value\n";
    for (std::size_t p = sel.begin; p < sel.end; ++p) {
        double lo = layers.front()->values[p], hi = lo;
        for (const auto* l : layers) {
            lo = std::min(lo, l->values[p]);
            hi = std::max(hi, l->values[p]);
        }
        const double width = (hi - lo) / static_cast<double>(sel.bins);
        std::vector<std::size_t> counts(sel.bins, 0);
        for (const auto* l : layers) {
            std::size_t b = 0;
            if (hi > lo) b = std::min(sel.bins - 1, static_cast<std::size_t>((l->values[p] - lo) / (hi - lo) *
                                                                              static_cast<double>(sel.bins)));
            ++counts[b];
        }
        for (std::size_t b = 0; b < sel.bins; ++b) {
            const double e0 = lo + width * static_cast<double>(b);
            const double e1 = b + 1 == sel.bins ? hi : lo + width * static_cast<double>(b + 1);
            os << p << ',' << b << ',' << format_double(e0) << ',' << format_double(e1) << ',' << counts[b] << ','
               << format_double(g->values[p]) << '\n';
        }
    }
}

/// Writes `<dir>/histogram_<layer>.csv` and returns its path.
inline std::string write_param_histogram(std::span<const ModelParams> models, const ModelParams& global,
                                         const HistogramSelection& sel, const std::string& dir) {
    std::ostringstream buf;
    write_param_histogram(buf, models, global, sel);
    std::filesystem::create_directories(dir);
    const std::string path = (std::filesystem::path(dir) / ("histogram_" + sel.layer + ".csv")).string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os << buf.str();
    if (!os) throw Error("write failed: '" + path + "'");
    return path;
}

// ---------------------------------------------------------------------------
// Diagnostics

inline nlohmann::json diagnostics_json(const RoundTrace& trace) {
    using nlohmann::json;
    json doc;
    doc["round"] = trace.round;
    doc["clients"] = std::vector<ClientId>(trace.clients.begin(), trace.clients.end());
    json layers = json::array();
    for (std::size_t l = 0; l < trace.diagnostics.size(); ++l) {
        const auto& d = trace.diagnostics[l];
        json entry;
        entry["name"] = trace.aggregated->layers[l].name;
        entry["high"] = d.mask.high;
        entry["high_count"] = d.mask.high_count();
        json micro = json::array();
        for (std::size_t k = 0; k < d.micro.rows; ++k) {
            auto row = d.micro.row(k);
            micro.push_back(std::vector<int>(row.begin(), row.end()));
        }
        entry["micro_classes"] = std::move(micro);
        json sim = json::array();
        for (std::size_t k = 0; k < d.similarity.rows(); ++k) {
            auto row = d.similarity.row(k);
            sim.push_back(std::vector<double>(row.begin(), row.end()));
        }
        entry["similarity"] = std::move(sim);
        json clusters = json::array();
        for (const auto& g : d.macro.clusters) {
            std::vector<ClientId> ids;
            for (auto row : g) ids.push_back(trace.clients[row]);
            clusters.push_back(ids);
        }
        entry["clusters"] = std::move(clusters);
        entry["tendencies"] = d.macro.tendencies;
        entry["weights"] = d.macro.weights;
        layers.push_back(std::move(entry));
    }
    doc["layers"] = std::move(layers);
    return doc;
}

/// Dumps one round under `<dir>/round_<t>/`: the broadcast model, every local
/// model, the aggregated model (checkpoints) and, for FedPake, the aggregation
/// intermediates as `aggregation.json`.
inline void dump_round(const RoundTrace& trace, const std::string& dir) {
    char name[32];
    std::snprintf(name, sizeof name, "round_%04zu", trace.round);
    const auto root = std::filesystem::path(dir) / name;
    std::filesystem::create_directories(root);
    save_checkpoint((root / "broadcast.ckpt").string(), *trace.broadcast);
    save_checkpoint((root / "global.ckpt").string(), *trace.aggregated);
    for (std::size_t i = 0; i < trace.clients.size(); ++i)
        save_checkpoint((root / ("client_" + std::to_string(trace.clients[i]) + ".ckpt")).string(), trace.locals[i]);
    if (!trace.diagnostics.empty()) {
        std::ofstream os(root / "aggregation.json");
        if (!os) throw Error("cannot write diagnostics under '" + root.string() + "'");
        os << diagnostics_json(trace).dump(1) << '\n';
    }
}

/// Per-layer squared-deviation statistics, one row per (round, layer).
inline void write_layer_sd(const ExperimentResult& result, const ModelParams& layout, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream os(std::filesystem::path(dir) / "sd_layers.csv", std::ios::binary);
    if (!os) throw Error("cannot write sd_layers.csv under '" + dir + "'");
    os << "round,layer,sd_mean,sd_max,sd_min\n";
    for (const auto& r : result.records)
        for (std::size_t l = 0; l < r.layer_sd.size(); ++l)
            os << r.round << ',' << layout.layers[l].name << ',' << format_double(r.layer_sd[l].mean) << ','
               << format_double(r.layer_sd[l].max) << ',' << format_double(r.layer_sd[l].min) << '\n';
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepPoint {
    double lambda;
    int micro_classes;
    int macro_classes;
};

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg) {
    const auto& base = cfg.federation.fedpake;
    auto axis = [](const auto& values, auto fallback) {
        using T = decltype(fallback);
        return values.empty() ? std::vector<T>{fallback} : std::vector<T>(values.begin(), values.end());
    };
    std::vector<SweepPoint> points;
    for (double l : axis(cfg.sweep.lambda, base.lambda))
        for (int c : axis(cfg.sweep.micro_classes, base.micro_classes))
            for (int s : axis(cfg.sweep.macro_classes, base.macro_classes)) points.push_back({l, c, s});
    return points;
}

inline std::string sweep_point_name(const SweepPoint& p) {
    std::ostringstream ss;
    ss << "lambda=" << p.lambda << "_C=" << p.micro_classes << "_S=" << p.macro_classes;
    return ss.str();
}

}  // namespace fedpake
