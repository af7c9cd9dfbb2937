#pragma once

/// @file aggregation.hpp
/// @brief Parameter-skew-aware aggregation (FedPake) and the FedAVG baseline.
///
/// FedPake aggregates one layer unit at a time:
///
///  1. **Parameter division.** The per-position coefficient of variation across
///     clients is min-max normalized; positions strictly above `lambda` form the
///     high-dispersion region, the rest the low-dispersion region.
///  2. **Low-dispersion positions** take the plain client mean.
///  3. **Micro-classes.** On high-dispersion positions every (client, position)
///     squared deviation from the client mean is normalized to [0,1] and binned
///     into one of `C` half-open bins ((i-1)/C, i/C]; a zero deviation gets bin 1.
///  4. **Macro-classes.** Clients are compared by the fraction of high-dispersion
///     positions where their micro-class labels agree, then merged by
///     average-linkage agglomeration until at most `S` clusters remain.
///  5. **Tendency and weights.** Each cluster's tendency is the modal label per
///     position. Its weight at a position is the frequency of that tendency
///     label across the high-dispersion region, divided by
///     (clusters used x high-dispersion count).
///  6. **High-dispersion positions** take the weighted sum of cluster means.
///
/// Every step is a pure function; `aggregate_layer_detailed` exposes all
/// intermediates for diagnostics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedpake/params.hpp"

namespace fedpake {

enum class SqDevNormalization { per_layer_max, per_position_max };

struct FedPakeConfig {
    double lambda = 0.2;
    int micro_classes = 4;
    int macro_classes = 4;
    double delta = 0.2;
    /// Stop merging once the best average-linkage similarity drops below delta.
    bool delta_early_stop = false;
    bool renormalize_weights = false;
    SqDevNormalization sqdev_normalization = SqDevNormalization::per_layer_max;

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must lie in [0,1]");
        if (micro_classes < 1) throw Error("micro_classes must be >= 1");
        if (macro_classes < 1) throw Error("macro_classes must be >= 1");
        if (!(delta >= 0.0 && delta <= 1.0)) throw Error("delta must lie in [0,1]");
    }
};

/// Exact bipartition of a layer's positions.
struct DispersionMask {
    std::vector<std::uint8_t> high;
    std::vector<std::uint8_t> low;

    std::size_t size() const noexcept { return high.size(); }
    std::size_t high_count() const noexcept {
        return static_cast<std::size_t>(std::count(high.begin(), high.end(), std::uint8_t{1}));
    }
};

/// Micro-class labels per (client row, position). 0 marks low-dispersion positions.
struct MicroClassMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> labels;

    MicroClassMatrix() = default;
    MicroClassMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), labels(r * c, 0) {}

    int& operator()(std::size_t k, std::size_t m) noexcept { return labels[k * cols + m]; }
    int operator()(std::size_t k, std::size_t m) const noexcept { return labels[k * cols + m]; }
    std::span<const int> row(std::size_t k) const noexcept { return {labels.data() + k * cols, cols}; }
};

using SimilarityMatrix = Matrix;

/// Client clusters (as row indices into the layer matrix), per-cluster tendency and weight field.
struct MacroClassing {
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::vector<int>> tendencies;
    std::vector<Vector> weights;
};

// ---------------------------------------------------------------------------
// Parameter division

inline DispersionMask parameter_division(std::span<const double> cv_norm, double lambda) {
    DispersionMask mask{std::vector<std::uint8_t>(cv_norm.size()), std::vector<std::uint8_t>(cv_norm.size())};
    for (std::size_t m = 0; m < cv_norm.size(); ++m) {
        const bool hi = cv_norm[m] > lambda;
        mask.high[m] = hi ? 1 : 0;
        mask.low[m] = hi ? 0 : 1;
    }
    return mask;
}

inline DispersionMask parameter_division(const LayerMatrix& w, double lambda) {
    w.validate();
    return parameter_division(normalize_cv(coefficient_of_variation(w)), lambda);
}

// ---------------------------------------------------------------------------
// Micro-classes

/// Bin index i in 1..C with (i-1)/C < v <= i/C; v <= 0 maps to 1.
inline int micro_class_label(double v, int num_classes) {
    if (!(v > 0.0)) return 1;
    const double c = static_cast<double>(num_classes);
    int i = static_cast<int>(std::ceil(v * c));
    i = std::clamp(i, 1, num_classes);
    // ceil(v*C) can be off by one near bin edges; settle against the literal bounds.
    while (i > 1 && v <= static_cast<double>(i - 1) / c) --i;
    while (i < num_classes && v > static_cast<double>(i) / c) ++i;
    return i;
}

/// Squared deviations on high-dispersion positions scaled into [0,1].
/// Entries outside the high region are left at zero.
inline Matrix normalized_sq_dev(const Matrix& sq_dev, const DispersionMask& mask, SqDevNormalization mode) {
    Matrix out(sq_dev.rows(), sq_dev.cols());
    const std::size_t rows = sq_dev.rows();
    const std::size_t cols = sq_dev.cols();
    if (mode == SqDevNormalization::per_layer_max) {
        double peak = 0.0;
        for (std::size_t k = 0; k < rows; ++k)
            for (std::size_t m = 0; m < cols; ++m)
                if (mask.high[m]) peak = std::max(peak, sq_dev(k, m));
        if (peak > 0.0)
            for (std::size_t k = 0; k < rows; ++k)
                for (std::size_t m = 0; m < cols; ++m)
                    if (mask.high[m]) out(k, m) = sq_dev(k, m) / peak;
    } else {
        for (std::size_t m = 0; m < cols; ++m) {
            if (!mask.high[m]) continue;
            double peak = 0.0;
            for (std::size_t k = 0; k < rows; ++k) peak = std::max(peak, sq_dev(k, m));
            if (peak > 0.0)
                for (std::size_t k = 0; k < rows; ++k) out(k, m) = sq_dev(k, m) / peak;
        }
    }
    return out;
}

inline MicroClassMatrix micro_classify(const Matrix& sq_dev, const DispersionMask& mask, int num_classes,
                                       SqDevNormalization mode) {
    if (num_classes < 1) throw Error("micro_classes must be >= 1");
    if (mask.size() != sq_dev.cols()) throw Error("dispersion mask width does not match layer width");
    const Matrix v = normalized_sq_dev(sq_dev, mask, mode);
    MicroClassMatrix e(sq_dev.rows(), sq_dev.cols());
    for (std::size_t k = 0; k < e.rows; ++k)
        for (std::size_t m = 0; m < e.cols; ++m)
            if (mask.high[m]) e(k, m) = micro_class_label(v(k, m), num_classes);
    return e;
}

inline MicroClassMatrix micro_classify(const LayerMatrix& w, const DispersionMask& mask, int num_classes,
                                       SqDevNormalization mode) {
    return micro_classify(squared_deviation(w), mask, num_classes, mode);
}

// ---------------------------------------------------------------------------
// Macro-classes

/// Fraction of high-dispersion positions where the two clients share a label.
inline double similarity(const MicroClassMatrix& e, const DispersionMask& mask, std::size_t k1, std::size_t k2) {
    const std::size_t region = mask.high_count();
    if (region == 0) throw Error("similarity undefined on an empty high-dispersion region");
    std::size_t differ = 0;
    for (std::size_t m = 0; m < e.cols; ++m)
        if (mask.high[m] && e(k1, m) != e(k2, m)) ++differ;
    return 1.0 - static_cast<double>(differ) / static_cast<double>(region);
}

inline SimilarityMatrix similarity_matrix(const MicroClassMatrix& e, const DispersionMask& mask) {
    SimilarityMatrix sim(e.rows, e.rows, 1.0);
    for (std::size_t a = 0; a < e.rows; ++a)
        for (std::size_t b = a + 1; b < e.rows; ++b) sim(a, b) = sim(b, a) = similarity(e, mask, a, b);
    return sim;
}

struct ClusterOptions {
    int max_clusters = 1;
    double delta = 0.0;
    bool delta_early_stop = false;
};

/// Linkage values closer than this are treated as ties.
inline constexpr double kLinkageTieTolerance = 1e-12;

/// Average-linkage agglomerative clustering on a similarity matrix.
///
/// Ties between equally similar pairs go to the pair whose (first cluster min id,
/// second cluster min id) is lexicographically smallest. Members are returned as
/// row indices sorted by client id; clusters are ordered by their smallest id.
inline std::vector<std::vector<std::size_t>> cluster_clients(const SimilarityMatrix& sim,
                                                             std::span<const ClientId> ids,
                                                             const ClusterOptions& opts) {
    const std::size_t n = sim.rows();
    if (opts.max_clusters < 1) throw Error("macro_classes must be >= 1");
    if (ids.size() != n) throw Error("client id count does not match similarity matrix");

    auto by_id = [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; };
    std::vector<std::vector<std::size_t>> clusters(n);
    for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
    auto order_clusters = [&] {
        std::sort(clusters.begin(), clusters.end(),
                  [&](const auto& x, const auto& y) { return ids[x.front()] < ids[y.front()]; });
    };
    order_clusters();

    const auto target = static_cast<std::size_t>(opts.max_clusters);
    while (clusters.size() > target) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_a = 0, best_b = 1;
        for (std::size_t a = 0; a < clusters.size(); ++a) {
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                double sum = 0.0;
                for (std::size_t x : clusters[a])
                    for (std::size_t y : clusters[b]) sum += sim(x, y);
                const double link = sum / static_cast<double>(clusters[a].size() * clusters[b].size());
                if (link > best + kLinkageTieTolerance) {
                    best = link;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        if (opts.delta_early_stop && best < opts.delta) break;
        auto merged = std::move(clusters[best_a]);
        merged.insert(merged.end(), clusters[best_b].begin(), clusters[best_b].end());
        std::sort(merged.begin(), merged.end(), by_id);
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_b));
        clusters[best_a] = std::move(merged);
        order_clusters();
    }
    return clusters;
}

/// Modal label per high-dispersion position over the cluster's members; ties go to the smaller label.
inline std::vector<int> class_tendency(const MicroClassMatrix& e, const DispersionMask& mask,
                                       std::span<const std::size_t> cluster, int num_classes) {
    if (cluster.empty()) throw Error("class_tendency: empty cluster");
    std::vector<int> q(e.cols, 0);
    std::vector<std::size_t> freq(static_cast<std::size_t>(num_classes) + 1);
    for (std::size_t m = 0; m < e.cols; ++m) {
        if (!mask.high[m]) continue;
        std::fill(freq.begin(), freq.end(), 0);
        for (std::size_t k : cluster) ++freq.at(static_cast<std::size_t>(e(k, m)));
        int top = 1;
        for (int c = 2; c <= num_classes; ++c)
            if (freq[static_cast<std::size_t>(c)] > freq[static_cast<std::size_t>(top)]) top = c;
        q[m] = top;
    }
    return q;
}

/// Weight field per cluster. Faithful mode uses freq_j(Q_j[m]) / (clusters_used * |high|);
/// renormalized mode rescales each position so the weights over clusters sum to one.
inline std::vector<Vector> aggregation_weights(const std::vector<std::vector<int>>& tendencies,
                                               const DispersionMask& mask, std::size_t clusters_used,
                                               int num_classes, bool renormalize) {
    const std::size_t region = mask.high_count();
    if (region == 0) throw Error("aggregation weights undefined on an empty high-dispersion region");
    if (clusters_used == 0) throw Error("aggregation weights need at least one cluster");
    const double denom = static_cast<double>(clusters_used) * static_cast<double>(region);

    std::vector<Vector> alpha;
    alpha.reserve(tendencies.size());
    for (const auto& q : tendencies) {
        if (q.size() != mask.size()) throw Error("tendency width does not match mask");
        std::vector<std::size_t> freq(static_cast<std::size_t>(num_classes) + 1, 0);
        for (std::size_t m = 0; m < q.size(); ++m)
            if (mask.high[m]) ++freq.at(static_cast<std::size_t>(q[m]));
        Vector a(q.size(), 0.0);
        for (std::size_t m = 0; m < q.size(); ++m)
            if (mask.high[m]) a[m] = static_cast<double>(freq[static_cast<std::size_t>(q[m])]) / denom;
        alpha.push_back(std::move(a));
    }

    if (renormalize) {
        for (std::size_t m = 0; m < mask.size(); ++m) {
            if (!mask.high[m]) continue;
            double total = 0.0;
            for (const auto& a : alpha) total += a[m];
            if (total > 0.0)
                for (auto& a : alpha) a[m] /= total;
        }
    }
    return alpha;
}

// ---------------------------------------------------------------------------
// Layer and model aggregation

struct LayerAggregation {
    Vector global;
    DispersionMask mask;
    MicroClassMatrix micro;
    SimilarityMatrix similarity;
    MacroClassing macro;
};

inline LayerAggregation aggregate_layer_detailed(const LayerMatrix& w, const FedPakeConfig& cfg) {
    w.validate();
    cfg.validate();

    LayerAggregation out;
    const LayerStats stats = layer_stats(w);
    out.mask = parameter_division(stats.cv_norm, cfg.lambda);
    out.global = stats.mean;
    if (out.mask.high_count() == 0) return out;

    out.micro = micro_classify(stats.sq_dev, out.mask, cfg.micro_classes, cfg.sqdev_normalization);
    out.similarity = similarity_matrix(out.micro, out.mask);
    out.macro.clusters = cluster_clients(out.similarity, w.clients,
                                         {cfg.macro_classes, cfg.delta, cfg.delta_early_stop});
    for (const auto& g : out.macro.clusters)
        out.macro.tendencies.push_back(class_tendency(out.micro, out.mask, g, cfg.micro_classes));
    out.macro.weights = aggregation_weights(out.macro.tendencies, out.mask, out.macro.clusters.size(),
                                            cfg.micro_classes, cfg.renormalize_weights);

    const std::size_t width = w.width();
    std::vector<Vector> cluster_means;
    cluster_means.reserve(out.macro.clusters.size());
    for (const auto& g : out.macro.clusters) {
        auto first = w.data.row(g.front());
        Vector offset(width, 0.0);
        for (std::size_t i = 1; i < g.size(); ++i) {
            auto row = w.data.row(g[i]);
            for (std::size_t m = 0; m < width; ++m) offset[m] += row[m] - first[m];
        }
        Vector cm(width);
        for (std::size_t m = 0; m < width; ++m) cm[m] = first[m] + offset[m] / static_cast<double>(g.size());
        cluster_means.push_back(std::move(cm));
    }

    for (std::size_t m = 0; m < width; ++m) {
        if (!out.mask.high[m]) continue;
        double acc = 0.0;
        for (std::size_t j = 0; j < cluster_means.size(); ++j) acc += out.macro.weights[j][m] * cluster_means[j][m];
        out.global[m] = acc;
    }
    return out;
}

inline Vector aggregate_layer(const LayerMatrix& w, const FedPakeConfig& cfg) {
    return aggregate_layer_detailed(w, cfg).global;
}

inline void require_uniform_structure(std::span<const ModelParams> models) {
    if (models.empty()) throw Error("empty client set");
    for (std::size_t i = 1; i < models.size(); ++i) require_same_structure(models.front(), models[i]);
}

/// FedPake applied independently to every layer tensor. `ids` identifies each model's client.
inline ModelParams aggregate_model(std::span<const ModelParams> models, std::span<const ClientId> ids,
                                   const FedPakeConfig& cfg,
                                   std::vector<LayerAggregation>* diagnostics = nullptr) {
    require_uniform_structure(models);
    if (ids.size() != models.size()) throw Error("client id count does not match model count");
    ModelParams out = models.front();
    if (diagnostics) diagnostics->clear();
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        auto detail = aggregate_layer_detailed(stack_layer(models, ids, l), cfg);
        out.layers[l].values = detail.global;
        if (diagnostics) diagnostics->push_back(std::move(detail));
    }
    return out;
}

inline ModelParams aggregate_model(std::span<const ModelParams> models, const FedPakeConfig& cfg) {
    std::vector<ClientId> ids(models.size());
    std::iota(ids.begin(), ids.end(), ClientId{0});
    return aggregate_model(models, ids, cfg);
}

/// Sample-count-weighted parameter mean.
inline ModelParams fedavg_aggregate(std::span<const ModelParams> models, std::span<const std::size_t> sample_counts) {
    require_uniform_structure(models);
    if (sample_counts.size() != models.size()) throw Error("sample count list does not match model count");
    const double total = static_cast<double>(std::accumulate(sample_counts.begin(), sample_counts.end(), std::size_t{0}));
    if (!(total > 0.0)) throw Error("fedavg: total sample count is zero");

    ModelParams out = models.front();
    for (auto& l : out.layers) std::fill(l.values.begin(), l.values.end(), 0.0);
    for (std::size_t i = 0; i < models.size(); ++i) {
        const double share = static_cast<double>(sample_counts[i]) / total;
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            const auto& src = models[i].layers[l].values;
            auto& dst = out.layers[l].values;
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += share * src[j];
        }
    }
    return out;
}

inline const char* to_string(SqDevNormalization mode) {
    return mode == SqDevNormalization::per_layer_max ? "per_layer_max" : "per_position_max";
}

}  // namespace fedpake
