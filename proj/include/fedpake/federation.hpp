#pragma once

/// @file federation.hpp
/// @brief Round-based federated training: client sampling, local training,
/// strategy dispatch, central evaluation and dispersion tracking.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fedpake/aggregation.hpp"
#include "fedpake/data.hpp"
#include "fedpake/model.hpp"
#include "fedpake/params.hpp"
#include "fedpake/seed.hpp"

namespace fedpake {

enum class Strategy { fedavg, fedprox, fedpake };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::fedavg: return "fedavg";
        case Strategy::fedprox: return "fedprox";
        case Strategy::fedpake: return "fedpake";
    }
    return "?";
}

struct FederationConfig {
    std::size_t num_clients = 10;
    double join_ratio = 1.0;
    std::size_t rounds = 10;
    Strategy strategy = Strategy::fedpake;
    FedPakeConfig fedpake;
    LocalTrainConfig local;
    std::size_t eval_tail = 10;
    std::uint64_t seed = 0;
    /// Also record squared-deviation statistics per layer.
    bool per_layer_sd = false;
    /// Worker threads for local training; 0 picks the hardware concurrency.
    std::size_t threads = 0;

    void validate() const {
        if (num_clients == 0) throw Error("num_clients must be positive");
        if (!(join_ratio > 0.0 && join_ratio <= 1.0)) throw Error("join_ratio must lie in (0,1]");
        if (rounds == 0) throw Error("rounds must be >= 1");
        if (eval_tail == 0 || eval_tail > rounds) throw Error("eval_tail must lie in [1, rounds]");
        fedpake.validate();
        if (static_cast<std::size_t>(fedpake.macro_classes) > num_clients)
            throw Error("macro_classes must not exceed num_clients");
        local.validate();
    }

    /// Proximal coefficient actually used by local training under this strategy.
    double effective_prox_mu() const noexcept { return strategy == Strategy::fedprox ? local.prox_mu : 0.0; }
};

struct SdStats {
    double mean = 0.0;
    double max = 0.0;
    double min = 0.0;
};

struct RoundRecord {
    std::size_t round = 0;
    double mean_train_loss = 0.0;
    double test_accuracy = 0.0;
    double sd_mean = 0.0;
    double sd_max = 0.0;
    double sd_min = 0.0;
    std::vector<ClientId> participating;
    /// Mean over participants of ||w_local - w_broadcast||.
    double mean_local_drift = 0.0;
    /// Filled only when FederationConfig::per_layer_sd is set.
    std::vector<SdStats> layer_sd;
};

struct ExperimentResult {
    std::vector<RoundRecord> records;
    double final_accuracy = 0.0;
    ModelParams final_model;
};

/// Client datasets indexed by client id plus the central test set.
struct FederationData {
    std::vector<Dataset> clients;
    Dataset test;

    static FederationData from_plan(const Dataset& train, const PartitionPlan& plan, Dataset test) {
        FederationData d;
        d.clients.reserve(plan.num_clients());
        for (const auto& idx : plan.assignments) {
            if (idx.empty()) throw Error("partition plan contains an empty client");
            d.clients.push_back(train.subset(idx));
        }
        d.test = std::move(test);
        return d;
    }
};

/// Everything the server saw in one round, handed to an optional observer.
struct RoundTrace {
    std::size_t round = 0;
    const ModelParams* broadcast = nullptr;
    std::span<const ClientId> clients;
    std::span<const ModelParams> locals;
    const ModelParams* aggregated = nullptr;
    /// Per-layer FedPake intermediates; empty for other strategies.
    std::span<const LayerAggregation> diagnostics;
};

using RoundObserver = std::function<void(const RoundTrace&)>;

/// ceil(ratio * n) distinct client ids, uniform without replacement, sorted ascending.
inline std::vector<ClientId> sample_clients(std::size_t num_clients, double ratio, std::size_t round,
                                            std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw Error("join_ratio must lie in (0,1]");
    auto take = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(num_clients) - 1e-9));
    take = std::clamp<std::size_t>(take, 1, num_clients);
    std::vector<ClientId> ids(num_clients);
    std::iota(ids.begin(), ids.end(), ClientId{0});
    Rng rng(derive_seed(seed, "sample", round));
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, num_clients - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(take);
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Squared deviation from the cross-client mean, pooled over every (client, position).
inline SdStats pooled_sd_stats(std::span<const ModelParams> locals, std::span<const std::size_t> layers) {
    SdStats s{0.0, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    std::vector<ClientId> ids(locals.size());
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t l : layers) {
        const LayerMatrix w = stack_layer(locals, ids, l);
        const Matrix sd = squared_deviation(w);
        for (double v : sd.values()) {
            total += v;
            s.max = std::max(s.max, v);
            s.min = std::min(s.min, v);
            ++count;
        }
    }
    s.mean = count ? total / static_cast<double>(count) : 0.0;
    if (count == 0) s.max = s.min = 0.0;
    return s;
}

inline SdStats pooled_sd_stats(std::span<const ModelParams> locals) {
    std::vector<std::size_t> layers(locals.empty() ? 0 : locals.front().layers.size());
    std::iota(layers.begin(), layers.end(), std::size_t{0});
    return pooled_sd_stats(locals, layers);
}

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < n; i += threads) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

struct RoundOutcome {
    ModelParams global;
    RoundRecord record;
};

/// One communication round. Local training of the sampled clients may run
/// concurrently; results are kept in ascending client-id order, so the outcome
/// does not depend on scheduling.
inline RoundOutcome run_round(const ModelParams& global, std::size_t round, const FederationConfig& cfg,
                              const MLPSpec& arch, const FederationData& data,
                              const RoundObserver& observer = {}) {
    if (data.clients.size() != cfg.num_clients)
        throw Error("federation data holds " + std::to_string(data.clients.size()) + " clients, config expects " +
                    std::to_string(cfg.num_clients));
    RoundOutcome out;
    RoundRecord& rec = out.record;
    rec.round = round;
    rec.participating = sample_clients(cfg.num_clients, cfg.join_ratio, round, cfg.seed);
    const auto& ids = rec.participating;

    LocalTrainConfig local = cfg.local;
    local.prox_mu = cfg.effective_prox_mu();
    const std::uint64_t train_seed = derive_seed(cfg.seed, "local-train", round);
    const MLPState start = with_params(arch, global);

    std::vector<ModelParams> locals(ids.size());
    std::vector<double> losses(ids.size());
    detail::parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
        try {
            auto res = train_local(start, data.clients[ids[i]], local, local.prox_mu > 0.0 ? &global : nullptr,
                                   train_seed);
            locals[i] = std::move(res.state.params);
            losses[i] = res.mean_loss;
        } catch (const Error& e) {
            throw Error("client " + std::to_string(ids[i]) + ": " + e.what());
        }
    });

    std::vector<LayerAggregation> diagnostics;
    if (cfg.strategy == Strategy::fedpake) {
        out.global = aggregate_model(locals, ids, cfg.fedpake, observer ? &diagnostics : nullptr);
    } else {
        std::vector<std::size_t> counts;
        counts.reserve(ids.size());
        for (ClientId id : ids) counts.push_back(data.clients[id].size());
        out.global = fedavg_aggregate(locals, counts);
    }

    rec.mean_train_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
    rec.test_accuracy = evaluate(with_params(arch, out.global), data.test).accuracy;
    const SdStats sd = pooled_sd_stats(locals);
    rec.sd_mean = sd.mean;
    rec.sd_max = sd.max;
    rec.sd_min = sd.min;
    if (cfg.per_layer_sd) {
        for (std::size_t l = 0; l < global.layers.size(); ++l) {
            const std::size_t one[] = {l};
            rec.layer_sd.push_back(pooled_sd_stats(locals, one));
        }
    }
    double drift = 0.0;
    for (const auto& m : locals) drift += l2_distance(m, global);
    rec.mean_local_drift = drift / static_cast<double>(locals.size());

    if (observer) observer(RoundTrace{round, &global, ids, locals, &out.global, diagnostics});
    return out;
}

/// Mean of the last `tail` test accuracies.
inline double tail_accuracy(std::span<const RoundRecord> records, std::size_t tail) {
    tail = std::min(tail, records.size());
    if (tail == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = records.size() - tail; i < records.size(); ++i) acc += records[i].test_accuracy;
    return acc / static_cast<double>(tail);
}

/// The initial global model: `arch` initialized from derive_seed(seed, "init").
inline ModelParams initial_model(const FederationConfig& cfg, const MLPSpec& arch) {
    MLPSpec spec = arch;
    spec.seed = derive_seed(cfg.seed, "init");
    return init_mlp(spec).params;
}

inline ExperimentResult run_experiment(const FederationConfig& cfg, const MLPSpec& arch, const FederationData& data,
                                       const RoundObserver& observer = {}) {
    cfg.validate();
    arch.validate();
    ExperimentResult result;
    ModelParams global = initial_model(cfg, arch);
    result.records.reserve(cfg.rounds);
    for (std::size_t t = 1; t <= cfg.rounds; ++t) {
        auto step = run_round(global, t, cfg, arch, data, observer);
        global = std::move(step.global);
        result.records.push_back(std::move(step.record));
    }
    result.final_accuracy = tail_accuracy(result.records, cfg.eval_tail);
    result.final_model = std::move(global);
    return result;
}

}  // namespace fedpake
