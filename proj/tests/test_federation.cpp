#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <set>

#include "fedpake/federation.hpp"

using namespace fedpake;

namespace {

struct Setup {
    FederationConfig cfg;
    MLPSpec arch{{4, 6, 3}, Activation::relu, 0};
    FederationData data;
};

Setup iid_setup(std::size_t clients, std::size_t per_client, Strategy strategy) {
    Setup s;
    s.cfg.num_clients = clients;
    s.cfg.rounds = 3;
    s.cfg.eval_tail = 2;
    s.cfg.strategy = strategy;
    s.cfg.fedpake.macro_classes = static_cast<int>(std::min<std::size_t>(clients, 2));
    s.cfg.local.batch_size = 8;
    s.cfg.seed = 17;
    s.cfg.threads = 1;
    const auto all = gen_synthetic(3, clients * per_client, 4, 2.0, 5);
    const auto split = train_test_split(all, 0.25, 6);
    // Equal client sizes: trim the train set to a multiple of the client count.
    std::vector<std::size_t> keep(clients * (split.train.size() / clients));
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
    const auto train = split.train.subset(keep);
    s.data = FederationData::from_plan(train, partition_iid(train, clients, 7), split.test);
    return s;
}

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
    double d = 0.0;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        for (std::size_t j = 0; j < a.layers[l].values.size(); ++j)
            d = std::max(d, std::abs(a.layers[l].values[j] - b.layers[l].values[j]));
    return d;
}

}  // namespace

TEST(SampleClients, FullParticipationAndDeterminism) {
    const auto all = sample_clients(6, 1.0, 3, 9);
    EXPECT_EQ(all, (std::vector<ClientId>{0, 1, 2, 3, 4, 5}));
    const auto half = sample_clients(20, 0.5, 4, 9);
    EXPECT_EQ(half.size(), 10u);
    EXPECT_TRUE(std::is_sorted(half.begin(), half.end()));
    EXPECT_EQ(std::set<ClientId>(half.begin(), half.end()).size(), 10u);
    EXPECT_EQ(half, sample_clients(20, 0.5, 4, 9));
    EXPECT_EQ(sample_clients(10, 0.01, 1, 0).size(), 1u);
    EXPECT_EQ(sample_clients(10, 0.3, 1, 0).size(), 3u);
    EXPECT_THROW(sample_clients(10, 0.0, 1, 0), Error);
    EXPECT_THROW(sample_clients(10, 1.5, 1, 0), Error);
}

TEST(SampleClients, RoundsDrawIndependently) {
    std::set<std::vector<ClientId>> distinct;
    for (std::size_t r = 1; r <= 20; ++r) distinct.insert(sample_clients(20, 0.25, r, 1));
    EXPECT_GT(distinct.size(), 15u);
}

TEST(FederationConfig, Validation) {
    FederationConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.fedpake.macro_classes = 11;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.eval_tail = 11;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.join_ratio = 0.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.local.prox_mu = 0.5;
    EXPECT_EQ(cfg.effective_prox_mu(), 0.0);
    cfg.strategy = Strategy::fedprox;
    EXPECT_EQ(cfg.effective_prox_mu(), 0.5);
}

TEST(RunRound, FedPakeAtLambdaOneMatchesFedAvgOnEqualShards) {
    auto pake = iid_setup(5, 40, Strategy::fedpake);
    pake.cfg.fedpake.lambda = 1.0;
    auto avg = pake;
    avg.cfg.strategy = Strategy::fedavg;
    for (const auto& c : pake.data.clients) ASSERT_EQ(c.size(), pake.data.clients[0].size());
    ModelParams global = initial_model(pake.cfg, pake.arch);
    for (std::size_t t = 1; t <= 3; ++t) {
        const auto a = run_round(global, t, pake.cfg, pake.arch, pake.data);
        const auto b = run_round(global, t, avg.cfg, avg.arch, avg.data);
        EXPECT_LT(max_abs_diff(a.global, b.global), 1e-12) << "round " << t;
        global = a.global;
    }
}

TEST(RunRound, SingleClientReturnsItsLocalModel) {
    auto s = iid_setup(1, 60, Strategy::fedpake);
    s.cfg.fedpake.macro_classes = 1;
    const ModelParams global = initial_model(s.cfg, s.arch);
    const auto out = run_round(global, 1, s.cfg, s.arch, s.data);
    const auto local = train_local(with_params(s.arch, global), s.data.clients[0], s.cfg.local, nullptr,
                                   derive_seed(s.cfg.seed, "local-train", 1));
    EXPECT_EQ(out.global, local.state.params);
    EXPECT_EQ(out.record.mean_train_loss, local.mean_loss);
    EXPECT_EQ(out.record.sd_max, 0.0);
}

TEST(RunRound, DispersionStatisticsMatchRecomputation) {
    auto s = iid_setup(4, 30, Strategy::fedpake);
    s.cfg.per_layer_sd = true;
    std::vector<ModelParams> locals;
    ModelParams broadcast;
    const auto out = run_round(initial_model(s.cfg, s.arch), 1, s.cfg, s.arch, s.data, [&](const RoundTrace& t) {
        locals.assign(t.locals.begin(), t.locals.end());
        broadcast = *t.broadcast;
    });
    ASSERT_EQ(locals.size(), 4u);
    double total = 0.0, hi = -1.0, lo = std::numeric_limits<double>::infinity(), drift = 0.0;
    std::size_t n = 0;
    for (std::size_t l = 0; l < broadcast.layers.size(); ++l) {
        double lhi = -1.0;
        for (std::size_t j = 0; j < broadcast.layers[l].values.size(); ++j) {
            double mean = 0.0;
            for (const auto& m : locals) mean += m.layers[l].values[j];
            mean /= 4.0;
            for (const auto& m : locals) {
                const double sd = (m.layers[l].values[j] - mean) * (m.layers[l].values[j] - mean);
                total += sd;
                hi = std::max(hi, sd);
                lo = std::min(lo, sd);
                lhi = std::max(lhi, sd);
                ++n;
            }
        }
        EXPECT_NEAR(out.record.layer_sd[l].max, lhi, 1e-12 * std::max(1.0, lhi));
    }
    for (const auto& m : locals) {
        double d2 = 0.0;
        for (std::size_t l = 0; l < broadcast.layers.size(); ++l)
            for (std::size_t j = 0; j < broadcast.layers[l].values.size(); ++j)
                d2 += std::pow(m.layers[l].values[j] - broadcast.layers[l].values[j], 2);
        drift += std::sqrt(d2) / 4.0;
    }
    EXPECT_NEAR(out.record.sd_mean, total / static_cast<double>(n), 1e-12 * std::max(1.0, hi));
    EXPECT_NEAR(out.record.sd_max, hi, 1e-12 * std::max(1.0, hi));
    EXPECT_NEAR(out.record.sd_min, lo, 1e-12 * std::max(1.0, hi));
    EXPECT_NEAR(out.record.mean_local_drift, drift, 1e-12);
    EXPECT_EQ(out.record.layer_sd.size(), broadcast.layers.size());
}

TEST(RunExperiment, OneRoundEqualsRunRound) {
    auto s = iid_setup(3, 30, Strategy::fedpake);
    s.cfg.rounds = 1;
    s.cfg.eval_tail = 1;
    const auto res = run_experiment(s.cfg, s.arch, s.data);
    const auto step = run_round(initial_model(s.cfg, s.arch), 1, s.cfg, s.arch, s.data);
    EXPECT_EQ(res.final_model, step.global);
    ASSERT_EQ(res.records.size(), 1u);
    EXPECT_EQ(res.records[0].test_accuracy, step.record.test_accuracy);
    EXPECT_EQ(res.final_accuracy, step.record.test_accuracy);
}

TEST(RunExperiment, DeterministicAcrossThreadCounts) {
    for (auto strategy : {Strategy::fedavg, Strategy::fedprox, Strategy::fedpake}) {
        auto s = iid_setup(5, 30, strategy);
        s.cfg.join_ratio = 0.6;
        const auto a = run_experiment(s.cfg, s.arch, s.data);
        s.cfg.threads = 4;
        const auto b = run_experiment(s.cfg, s.arch, s.data);
        EXPECT_EQ(a.final_model, b.final_model) << to_string(strategy);
        EXPECT_EQ(a.final_accuracy, b.final_accuracy);
        for (std::size_t t = 0; t < a.records.size(); ++t) {
            EXPECT_EQ(a.records[t].participating, b.records[t].participating);
            EXPECT_EQ(a.records[t].sd_mean, b.records[t].sd_mean);
        }
        s.cfg.seed += 1;
        EXPECT_NE(run_experiment(s.cfg, s.arch, s.data).final_model, a.final_model);
    }
}

TEST(RunExperiment, IdenticalClientsFollowCentralisedSgd) {
    auto s = iid_setup(4, 30, Strategy::fedavg);
    for (auto& c : s.data.clients) c = s.data.clients[0];
    const auto res = run_experiment(s.cfg, s.arch, s.data);
    ModelParams w = initial_model(s.cfg, s.arch);
    for (std::size_t t = 1; t <= s.cfg.rounds; ++t)
        w = train_local(with_params(s.arch, w), s.data.clients[0], s.cfg.local, nullptr,
                        derive_seed(s.cfg.seed, "local-train", t))
                .state.params;
    EXPECT_LT(max_abs_diff(res.final_model, w), 1e-12);

    s.cfg.strategy = Strategy::fedpake;
    EXPECT_EQ(run_experiment(s.cfg, s.arch, s.data).final_model, w);
}

TEST(RunExperiment, RecordsAreConsistent) {
    auto s = iid_setup(6, 20, Strategy::fedpake);
    s.cfg.rounds = 5;
    s.cfg.eval_tail = 3;
    s.cfg.join_ratio = 0.5;
    const auto res = run_experiment(s.cfg, s.arch, s.data);
    ASSERT_EQ(res.records.size(), 5u);
    for (std::size_t t = 0; t < 5; ++t) {
        const auto& r = res.records[t];
        EXPECT_EQ(r.round, t + 1);
        EXPECT_EQ(r.participating.size(), 3u);
        EXPECT_LE(r.sd_min, r.sd_mean);
        EXPECT_LE(r.sd_mean, r.sd_max);
        EXPECT_GE(r.test_accuracy, 0.0);
        EXPECT_LE(r.test_accuracy, 1.0);
        EXPECT_GT(r.mean_train_loss, 0.0);
    }
    const double tail = (res.records[2].test_accuracy + res.records[3].test_accuracy + res.records[4].test_accuracy) / 3;
    EXPECT_EQ(res.final_accuracy, tail);
}

TEST(RunExperiment, RejectsMismatchedData) {
    auto s = iid_setup(3, 20, Strategy::fedavg);
    s.cfg.num_clients = 4;
    EXPECT_THROW(run_experiment(s.cfg, s.arch, s.data), Error);
}
