#pragma once

// Literal, loop-by-loop transcription of the FedPake layer aggregation,
// kept independent of include/fedpake: nested std::vector, plain sums, literal
// indicator functions and an exhaustive re-evaluation of every cluster pair at
// each merge. Only used by tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Row = std::vector<double>;
using Rows = std::vector<Row>;

struct Options {
    double lambda = 0.2;
    int C = 4;
    int S = 2;
    bool per_position_max = false;
    bool renormalize = false;
};

inline Row brute_mean(const Rows& w) {
    const std::size_t M = w[0].size();
    Row mean(M, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        double s = 0.0;
        for (const auto& r : w) s += r[m];
        mean[m] = s / static_cast<double>(w.size());
    }
    return mean;
}

inline Row brute_cv(const Rows& w) {
    const Row mean = brute_mean(w);
    Row cv(mean.size());
    for (std::size_t m = 0; m < mean.size(); ++m) {
        double s = 0.0;
        for (const auto& r : w) s += (r[m] - mean[m]) * (r[m] - mean[m]);
        cv[m] = std::sqrt(s / static_cast<double>(w.size())) / (std::fabs(mean[m]) + 1e-12);
    }
    return cv;
}

/// r^h as 0/1 per position.
inline std::vector<int> brute_high(const Rows& w, double lambda) {
    const Row cv = brute_cv(w);
    double lo = cv[0], hi = cv[0];
    for (double v : cv) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<int> rh(cv.size(), 0);
    if (hi == lo) return rh;
    for (std::size_t m = 0; m < cv.size(); ++m) rh[m] = ((cv[m] - lo) / (hi - lo) > lambda) ? 1 : 0;
    return rh;
}

/// E with labels on r^h only (0 elsewhere).
inline std::vector<std::vector<int>> brute_micro(const Rows& w, const std::vector<int>& rh, int C, bool per_position) {
    const std::size_t K = w.size(), M = w[0].size();
    const Row mean = brute_mean(w);
    Rows sd(K, Row(M, 0.0));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t m = 0; m < M; ++m) sd[k][m] = (w[k][m] - mean[m]) * (w[k][m] - mean[m]);

    std::vector<std::vector<int>> E(K, std::vector<int>(M, 0));
    for (std::size_t m = 0; m < M; ++m) {
        if (!rh[m]) continue;
        double denom = 0.0;
        if (per_position) {
            for (std::size_t k = 0; k < K; ++k) denom = std::max(denom, sd[k][m]);
        } else {
            for (std::size_t k2 = 0; k2 < K; ++k2)
                for (std::size_t m2 = 0; m2 < M; ++m2)
                    if (rh[m2]) denom = std::max(denom, sd[k2][m2]);
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double v = denom > 0.0 ? sd[k][m] / denom : 0.0;
            int label = 0;
            for (int i = 1; i <= C; ++i) {
                const bool in_bin = (static_cast<double>(i) / C >= v) && (v > static_cast<double>(i - 1) / C);
                label += i * (in_bin ? 1 : 0);
            }
            if (v == 0.0) label = 1;
            E[k][m] = label;
        }
    }
    return E;
}

inline double brute_sim(const std::vector<std::vector<int>>& E, const std::vector<int>& rh, std::size_t a,
                        std::size_t b) {
    int count_rh = 0, differ = 0;
    for (std::size_t m = 0; m < rh.size(); ++m) {
        count_rh += rh[m];
        if (rh[m] && E[a][m] != E[b][m]) ++differ;
    }
    return 1.0 - static_cast<double>(differ) / count_rh;
}

/// Clusters as lists of row indices; ids[row] is the client id used for tie-breaks.
inline std::vector<std::vector<std::size_t>> brute_cluster(const Rows& sim, const std::vector<unsigned>& ids, int S) {
    std::vector<std::vector<std::size_t>> G;
    for (std::size_t i = 0; i < sim.size(); ++i) G.push_back({i});
    auto min_id = [&](const std::vector<std::size_t>& g) {
        unsigned v = ids[g[0]];
        for (auto x : g) v = std::min(v, ids[x]);
        return v;
    };
    auto canonical = [&] {
        for (auto& g : G) std::sort(g.begin(), g.end(), [&](auto x, auto y) { return ids[x] < ids[y]; });
        std::sort(G.begin(), G.end(), [&](const auto& x, const auto& y) { return min_id(x) < min_id(y); });
    };
    canonical();
    while (G.size() > static_cast<std::size_t>(S)) {
        // Collect every pair's linkage, then pick max with the (min id, min id) tie rule.
        struct Cand {
            double link;
            unsigned ida, idb;
            std::size_t a, b;
        };
        std::vector<Cand> cands;
        for (std::size_t a = 0; a < G.size(); ++a)
            for (std::size_t b = 0; b < G.size(); ++b) {
                if (min_id(G[a]) >= min_id(G[b])) continue;
                double s = 0.0;
                for (auto x : G[a])
                    for (auto y : G[b]) s += sim[x][y];
                cands.push_back({s / static_cast<double>(G[a].size() * G[b].size()), min_id(G[a]), min_id(G[b]), a, b});
            }
        std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
            return std::make_pair(x.ida, x.idb) < std::make_pair(y.ida, y.idb);
        });
        Cand best = cands[0];
        for (const auto& c : cands)
            if (c.link > best.link + 1e-12) best = c;
        auto merged = G[best.a];
        merged.insert(merged.end(), G[best.b].begin(), G[best.b].end());
        std::vector<std::vector<std::size_t>> next;
        for (std::size_t i = 0; i < G.size(); ++i)
            if (i != best.a && i != best.b) next.push_back(G[i]);
        next.push_back(merged);
        G = next;
        canonical();
    }
    return G;
}

struct Trace {
    std::vector<int> rh;
    std::vector<std::vector<int>> E;
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::vector<int>> Q;
    Rows alpha;
    Row result;
};

inline Trace brute_aggregate(const Rows& w, const std::vector<unsigned>& ids, const Options& o) {
    const std::size_t K = w.size(), M = w[0].size();
    Trace t;
    t.rh = brute_high(w, o.lambda);
    const Row mean = brute_mean(w);
    int count_rh = 0;
    for (int v : t.rh) count_rh += v;
    if (count_rh == 0) {
        t.result = mean;
        return t;
    }
    t.E = brute_micro(w, t.rh, o.C, o.per_position_max);

    Rows sim(K, Row(K, 0.0));
    for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b) sim[a][b] = brute_sim(t.E, t.rh, a, b);
    t.clusters = brute_cluster(sim, ids, o.S);
    const std::size_t S_used = t.clusters.size();

    // Q_j = r^h (.) Top(E_Gj), ties to the smallest label.
    for (const auto& g : t.clusters) {
        std::vector<int> q(M, 0);
        for (std::size_t m = 0; m < M; ++m) {
            int best_label = 0, best_count = -1;
            for (int i = 1; i <= o.C; ++i) {
                int count = 0;
                for (auto k : g) count += (t.E[k][m] == i);
                if (count > best_count) {
                    best_count = count;
                    best_label = i;
                }
            }
            q[m] = t.rh[m] * best_label;
        }
        t.Q.push_back(q);
    }

    // alpha_j = sum_i Count(1(Q_j = i)) / (S * Count(r^h)) * 1(Q_j = i)
    for (const auto& q : t.Q) {
        Row a(M, 0.0);
        for (int i = 1; i <= o.C; ++i) {
            int count = 0;
            for (std::size_t m = 0; m < M; ++m) count += (q[m] == i);
            for (std::size_t m = 0; m < M; ++m)
                if (q[m] == i) a[m] += static_cast<double>(count) / (static_cast<double>(S_used) * count_rh);
        }
        t.alpha.push_back(a);
    }
    if (o.renormalize) {
        for (std::size_t m = 0; m < M; ++m) {
            if (!t.rh[m]) continue;
            double s = 0.0;
            for (const auto& a : t.alpha) s += a[m];
            for (auto& a : t.alpha) a[m] /= s;
        }
    }

    t.result.assign(M, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        double high = 0.0;
        for (std::size_t j = 0; j < t.clusters.size(); ++j) {
            double s = 0.0;
            for (auto k : t.clusters[j]) s += w[k][m];
            high += t.alpha[j][m] * (s / static_cast<double>(t.clusters[j].size()));
        }
        t.result[m] = (1 - t.rh[m]) * mean[m] + t.rh[m] * high;
    }
    return t;
}

}  // namespace oracle
