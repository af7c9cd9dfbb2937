#pragma once

/// @file data.hpp
/// @brief Datasets, synthetic generation, heterogeneous partitioning and CSV ingestion.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fedpake/params.hpp"
#include "fedpake/seed.hpp"

namespace fedpake {

struct Dataset {
    Matrix features;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }
    bool empty() const noexcept { return labels.empty(); }

    void validate() const {
        if (features.rows() != labels.size()) throw Error("dataset: feature rows do not match label count");
        for (int y : labels)
            if (y < 0 || y >= num_classes) throw Error("dataset: label " + std::to_string(y) + " out of range");
    }

    Dataset subset(std::span<const std::size_t> rows) const {
        Dataset out{Matrix(rows.size(), dim()), {}, num_classes};
        out.labels.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto src = features.row(rows[i]);
            std::copy(src.begin(), src.end(), out.features.row(i).begin());
            out.labels.push_back(labels[rows[i]]);
        }
        return out;
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(static_cast<std::size_t>(num_classes), 0);
        for (int y : labels) ++c[static_cast<std::size_t>(y)];
        return c;
    }
};

/// Per-client sample indices into a source dataset.
struct PartitionPlan {
    std::vector<std::vector<std::size_t>> assignments;

    std::size_t num_clients() const noexcept { return assignments.size(); }
};

inline constexpr int kCentreCandidates = 64;

/// Gaussian blobs: one unit-covariance blob per class, centred on a seeded
/// random point of the sphere of radius `class_separation`. Of
/// kCentreCandidates independent centre sets, the one with the largest minimum
/// pairwise distance is kept. Rows are class-major.
inline Dataset gen_synthetic(int num_classes, std::size_t samples_per_class, std::size_t dim,
                             double class_separation, std::uint64_t seed) {
    if (num_classes < 1 || samples_per_class == 0 || dim == 0)
        throw Error("gen_synthetic: class count, samples per class and dim must be positive");
    if (class_separation < 0.0) throw Error("gen_synthetic: class_separation must be non-negative");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto draw_centres = [&] {
        std::vector<Vector> centres(static_cast<std::size_t>(num_classes), Vector(dim));
        for (auto& c : centres) {
            double norm = 0.0;
            do {
                norm = 0.0;
                for (double& v : c) {
                    v = normal(rng);
                    norm += v * v;
                }
                norm = std::sqrt(norm);
            } while (norm == 0.0);
            for (double& v : c) v /= norm;
        }
        return centres;
    };
    auto min_gap = [](const std::vector<Vector>& cs) {
        double gap = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < cs.size(); ++a)
            for (std::size_t b = a + 1; b < cs.size(); ++b) {
                double d = 0.0;
                for (std::size_t j = 0; j < cs[a].size(); ++j) d += (cs[a][j] - cs[b][j]) * (cs[a][j] - cs[b][j]);
                gap = std::min(gap, d);
            }
        return gap;
    };
    std::vector<Vector> centres = draw_centres();
    double best = min_gap(centres);
    for (int i = 1; i < kCentreCandidates; ++i) {
        auto next = draw_centres();
        if (const double g = min_gap(next); g > best) {
            best = g;
            centres = std::move(next);
        }
    }
    for (auto& c : centres)
        for (double& v : c) v *= class_separation;

    Dataset ds{Matrix(static_cast<std::size_t>(num_classes) * samples_per_class, dim), {}, num_classes};
    ds.labels.reserve(ds.features.rows());
    std::size_t r = 0;
    for (int k = 0; k < num_classes; ++k) {
        for (std::size_t s = 0; s < samples_per_class; ++s, ++r) {
            auto row = ds.features.row(r);
            for (std::size_t j = 0; j < dim; ++j) row[j] = centres[static_cast<std::size_t>(k)][j] + normal(rng);
            ds.labels.push_back(k);
        }
    }
    return ds;
}

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

/// Seeded shuffle, then the first round(n * test_fraction) rows become the test set.
inline TrainTestSplit train_test_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must lie in (0,1)");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(ds.size()) * test_fraction));
    if (n_test == 0 || n_test >= ds.size()) throw Error("train_test_split: split leaves an empty side");
    std::span<const std::size_t> all(idx);
    return {ds.subset(all.subspan(n_test)), ds.subset(all.first(n_test))};
}

// ---------------------------------------------------------------------------
// Partitioners

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(ds.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) out[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    return out;
}

/// Splits `total` into `parts` consecutive chunk sizes differing by at most one.
inline std::vector<std::size_t> even_sizes(std::size_t total, std::size_t parts) {
    std::vector<std::size_t> sizes(parts, total / parts);
    for (std::size_t i = 0; i < total % parts; ++i) ++sizes[i];
    return sizes;
}

}  // namespace detail

inline PartitionPlan partition_iid(const Dataset& ds, std::size_t num_clients, std::uint64_t seed) {
    if (num_clients == 0 || num_clients > ds.size())
        throw Error("partition_iid: need 1 <= num_clients <= " + std::to_string(ds.size()));
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    PartitionPlan plan;
    std::size_t at = 0;
    for (std::size_t n : detail::even_sizes(idx.size(), num_clients)) {
        plan.assignments.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(at),
                                      idx.begin() + static_cast<std::ptrdiff_t>(at + n));
        at += n;
    }
    return plan;
}

/// Each client receives shards from exactly `classes_per_client` distinct classes.
/// Requires num_clients * classes_per_client to be a multiple of the class count
/// so every class is cut into the same number of shards.
inline PartitionPlan partition_pathological(const Dataset& ds, std::size_t num_clients,
                                            std::size_t classes_per_client, std::uint64_t seed) {
    const auto nc = static_cast<std::size_t>(ds.num_classes);
    if (num_clients == 0) throw Error("partition_pathological: num_clients must be positive");
    if (classes_per_client == 0 || classes_per_client > nc)
        throw Error("partition_pathological: classes_per_client=" + std::to_string(classes_per_client) +
                    " must lie in [1, " + std::to_string(nc) + "]");
    const std::size_t shards = num_clients * classes_per_client;
    if (shards % nc != 0)
        throw Error("partition_pathological: " + std::to_string(num_clients) + " clients x " +
                    std::to_string(classes_per_client) + " classes = " + std::to_string(shards) +
                    " shards, not divisible by " + std::to_string(nc) + " classes");
    const std::size_t shards_per_class = shards / nc;

    Rng rng(seed);
    auto by_class = detail::indices_by_class(ds);
    for (std::size_t c = 0; c < nc; ++c) {
        if (by_class[c].size() < shards_per_class)
            throw Error("partition_pathological: class " + std::to_string(c) + " has " +
                        std::to_string(by_class[c].size()) + " samples for " + std::to_string(shards_per_class) +
                        " shards");
        std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    }
    std::vector<std::size_t> class_order(nc);
    std::iota(class_order.begin(), class_order.end(), std::size_t{0});
    std::shuffle(class_order.begin(), class_order.end(), rng);

    // Slot s = client * cpc + j takes class_order[s mod nc]; consecutive slots of a
    // client hit distinct classes because cpc <= nc, and each class is hit
    // exactly shards_per_class times.
    std::vector<std::vector<std::size_t>> shard_sizes(nc);
    for (std::size_t c = 0; c < nc; ++c) shard_sizes[c] = detail::even_sizes(by_class[c].size(), shards_per_class);
    std::vector<std::size_t> next_shard(nc, 0), offset(nc, 0);

    PartitionPlan plan;
    plan.assignments.resize(num_clients);
    for (std::size_t client = 0; client < num_clients; ++client) {
        for (std::size_t j = 0; j < classes_per_client; ++j) {
            const std::size_t c = class_order[(client * classes_per_client + j) % nc];
            const std::size_t n = shard_sizes[c][next_shard[c]++];
            auto& pool = by_class[c];
            plan.assignments[client].insert(plan.assignments[client].end(),
                                            pool.begin() + static_cast<std::ptrdiff_t>(offset[c]),
                                            pool.begin() + static_cast<std::ptrdiff_t>(offset[c] + n));
            offset[c] += n;
        }
    }
    return plan;
}

struct DirichletConfig {
    double beta = 0.1;
    std::size_t num_clients = 10;
    std::uint64_t seed = 0;
    std::size_t min_samples_per_client = 1;
};

inline constexpr int kDirichletMaxRetries = 100;

/// Per class, client shares are drawn from Dir(beta) and the class's samples are
/// dealt out by largest-remainder rounding. The whole draw is repeated until every
/// client holds at least `min_samples_per_client` samples.
inline PartitionPlan partition_dirichlet(const Dataset& ds, const DirichletConfig& cfg) {
    if (!(cfg.beta > 0.0)) throw Error("partition_dirichlet: beta must be positive");
    if (cfg.num_clients == 0) throw Error("partition_dirichlet: num_clients must be positive");
    const std::size_t n_clients = cfg.num_clients;
    Rng rng(cfg.seed);
    std::gamma_distribution<double> gamma(cfg.beta, 1.0);
    const auto base = detail::indices_by_class(ds);

    for (int attempt = 0; attempt < kDirichletMaxRetries; ++attempt) {
        PartitionPlan plan;
        plan.assignments.resize(n_clients);
        for (auto pool : base) {
            std::shuffle(pool.begin(), pool.end(), rng);
            Vector share(n_clients);
            double total = 0.0;
            while (!(total > 0.0)) {
                total = 0.0;
                for (double& s : share) total += (s = gamma(rng));
            }
            const double n = static_cast<double>(pool.size());
            std::vector<std::size_t> count(n_clients);
            std::vector<std::pair<double, std::size_t>> remainder(n_clients);
            std::size_t assigned = 0;
            for (std::size_t i = 0; i < n_clients; ++i) {
                const double exact = share[i] / total * n;
                count[i] = static_cast<std::size_t>(std::floor(exact));
                assigned += count[i];
                remainder[i] = {exact - std::floor(exact), i};
            }
            std::stable_sort(remainder.begin(), remainder.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            for (std::size_t i = 0; assigned < pool.size(); ++i, ++assigned) ++count[remainder[i % n_clients].second];

            std::size_t at = 0;
            for (std::size_t i = 0; i < n_clients; ++i) {
                plan.assignments[i].insert(plan.assignments[i].end(), pool.begin() + static_cast<std::ptrdiff_t>(at),
                                           pool.begin() + static_cast<std::ptrdiff_t>(at + count[i]));
                at += count[i];
            }
        }
        const bool ok = std::all_of(plan.assignments.begin(), plan.assignments.end(), [&](const auto& a) {
            return a.size() >= std::max<std::size_t>(cfg.min_samples_per_client, 1);
        });
        if (ok) return plan;
    }
    throw Error("partition_dirichlet: no draw gave every client >= " + std::to_string(cfg.min_samples_per_client) +
                " samples after " + std::to_string(kDirichletMaxRetries) + " attempts");
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvLoadResult {
    Dataset dataset;
    std::size_t skipped_nan_rows = 0;
    /// original_labels[i] is the file's label value mapped to class i.
    std::vector<long long> original_labels;
};

/// Reads a comma-separated file whose first row is a header. Every column other
/// than `label_column` is a numeric feature. Labels are integers and are remapped
/// to 0..k-1 in ascending order of their original value. Rows containing NaN are
/// dropped and counted.
inline CsvLoadResult load_csv_dataset(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");

    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t\r");
            const auto e = cell.find_last_not_of(" \t\r");
            cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
        }
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        return cells;
    };
    auto fail = [&](std::size_t line_no, const std::string& msg) -> Error {
        return Error(path + ":" + std::to_string(line_no) + ": " + msg);
    };

    std::string line;
    if (!std::getline(in, line)) throw Error(path + ": missing header row");
    const auto header = split(line);
    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) throw Error(path + ": no column named '" + label_column + "'");
    const auto label_idx = static_cast<std::size_t>(label_it - header.begin());

    std::vector<Vector> rows;
    std::vector<long long> raw_labels;
    CsvLoadResult result;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw fail(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(cells.size()));
        Vector features;
        features.reserve(header.size() - 1);
        long long label = 0;
        bool has_nan = false;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& t = cells[c];
            if (c == label_idx) {
                auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), label);
                if (ec != std::errc() || p != t.data() + t.size() || t.empty())
                    throw fail(line_no, "label '" + t + "' is not an integer");
                continue;
            }
            double v = 0.0;
            auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
            if (ec != std::errc() || p != t.data() + t.size() || t.empty())
                throw fail(line_no, "column '" + header[c] + "': '" + t + "' is not a number");
            if (std::isnan(v)) has_nan = true;
            if (std::isinf(v)) throw fail(line_no, "column '" + header[c] + "': infinite value");
            features.push_back(v);
        }
        if (has_nan) {
            ++result.skipped_nan_rows;
            continue;
        }
        rows.push_back(std::move(features));
        raw_labels.push_back(label);
    }
    if (rows.empty()) throw Error(path + ": no data rows");

    std::map<long long, int> remap;
    for (long long l : raw_labels) remap.emplace(l, 0);
    int next = 0;
    for (auto& [orig, mapped] : remap) {
        mapped = next++;
        result.original_labels.push_back(orig);
    }
    result.dataset.features = Matrix::from_rows(rows);
    result.dataset.num_classes = next;
    result.dataset.labels.reserve(raw_labels.size());
    for (long long l : raw_labels) result.dataset.labels.push_back(remap.at(l));
    return result;
}

}  // namespace fedpake
