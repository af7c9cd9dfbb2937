#pragma once

/// @file params.hpp
/// @brief Parameter containers and the cross-client statistics consumed by
/// every aggregation strategy.
///
/// A model travels between server and clients as a ModelParams: an ordered
/// list of named, row-major LayerTensor values. For aggregation each layer is
/// stacked across clients into a LayerMatrix (one row per client).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace fedpake {

/// Every recoverable failure in the library is reported with this type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using ClientId = std::uint32_t;
using Vector = std::vector<double>;

/// Guard added to |mean| when computing the coefficient of variation.
inline constexpr double kCvEpsilon = 1e-12;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<Vector>& rows) {
        if (rows.empty()) return {};
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_) throw Error("Matrix::from_rows: ragged rows");
            std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> values() const noexcept { return data_; }
    std::span<double> values() noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

struct LayerTensor {
    std::string name;
    std::vector<std::size_t> shape;
    Vector values;

    std::size_t size() const noexcept {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    void validate() const {
        if (shape.empty()) throw Error("layer '" + name + "': empty shape");
        for (auto d : shape)
            if (d == 0) throw Error("layer '" + name + "': zero dimension in shape");
        if (values.size() != size())
            throw Error("layer '" + name + "': " + std::to_string(values.size()) +
                        " values for shape of size " + std::to_string(size()));
        for (double v : values)
            if (!std::isfinite(v)) throw Error("layer '" + name + "': non-finite value");
    }

    bool operator==(const LayerTensor&) const = default;
};

struct ModelParams {
    std::vector<LayerTensor> layers;

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.values.size();
        return n;
    }

    const LayerTensor* find(const std::string& name) const noexcept {
        for (const auto& l : layers)
            if (l.name == name) return &l;
        return nullptr;
    }

    void validate() const {
        std::unordered_set<std::string> seen;
        for (const auto& l : layers) {
            l.validate();
            if (!seen.insert(l.name).second) throw Error("duplicate layer name '" + l.name + "'");
        }
    }

    bool operator==(const ModelParams&) const = default;
};

/// Throws unless `b` has the same layer names and shapes, in the same order, as `a`.
inline void require_same_structure(const ModelParams& a, const ModelParams& b) {
    if (a.layers.size() != b.layers.size())
        throw Error("layer count mismatch: " + std::to_string(a.layers.size()) + " vs " +
                    std::to_string(b.layers.size()));
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto& la = a.layers[i];
        const auto& lb = b.layers[i];
        if (la.name != lb.name)
            throw Error("layer name mismatch at index " + std::to_string(i) + ": '" + la.name +
                        "' vs '" + lb.name + "'");
        if (la.shape != lb.shape || la.values.size() != lb.values.size())
            throw Error("layer '" + la.name + "': shape mismatch");
    }
}

/// Client-by-parameter matrix for one layer unit.
struct LayerMatrix {
    std::vector<ClientId> clients;
    Matrix data;

    std::size_t num_clients() const noexcept { return data.rows(); }
    std::size_t width() const noexcept { return data.cols(); }

    void validate() const {
        if (data.rows() == 0) throw Error("empty client set");
        if (data.cols() == 0) throw Error("layer matrix has zero width");
        if (clients.size() != data.rows()) throw Error("client id count does not match row count");
        for (double v : data.values())
            if (!std::isfinite(v)) throw Error("layer matrix contains non-finite values");
    }

    static LayerMatrix from_rows(std::vector<ClientId> ids, const std::vector<Vector>& rows) {
        return {std::move(ids), Matrix::from_rows(rows)};
    }
};

/// Stacks layer `index` of every model into a LayerMatrix.
inline LayerMatrix stack_layer(std::span<const ModelParams> models, std::span<const ClientId> ids,
                               std::size_t index) {
    if (models.empty()) throw Error("empty client set");
    const std::size_t width = models.front().layers.at(index).values.size();
    LayerMatrix out{{ids.begin(), ids.end()}, Matrix(models.size(), width)};
    for (std::size_t k = 0; k < models.size(); ++k) {
        const auto& v = models[k].layers.at(index).values;
        if (v.size() != width) throw Error("layer '" + models[k].layers[index].name + "': shape mismatch");
        std::copy(v.begin(), v.end(), out.data.row(k).begin());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-client statistics

inline Vector column_mean(const LayerMatrix& w) {
    if (w.num_clients() == 0) throw Error("empty client set");
    // Accumulate offsets from the first row so identical rows reproduce it exactly.
    auto first = w.data.row(0);
    Vector offset(w.width(), 0.0);
    for (std::size_t k = 1; k < w.num_clients(); ++k) {
        auto row = w.data.row(k);
        for (std::size_t m = 0; m < offset.size(); ++m) offset[m] += row[m] - first[m];
    }
    const double n = static_cast<double>(w.num_clients());
    Vector mean(w.width());
    for (std::size_t m = 0; m < mean.size(); ++m) mean[m] = first[m] + offset[m] / n;
    return mean;
}

inline Matrix squared_deviation(const LayerMatrix& w, std::span<const double> mean) {
    Matrix out(w.num_clients(), w.width());
    for (std::size_t k = 0; k < w.num_clients(); ++k) {
        auto row = w.data.row(k);
        auto dst = out.row(k);
        for (std::size_t m = 0; m < row.size(); ++m) {
            const double d = row[m] - mean[m];
            dst[m] = d * d;
        }
    }
    return out;
}

inline Matrix squared_deviation(const LayerMatrix& w) { return squared_deviation(w, column_mean(w)); }

/// Population standard deviation over |mean| + kCvEpsilon, per column.
/// Always non-negative; a zero-mean column with spread yields a large finite value.
inline Vector coefficient_of_variation(const LayerMatrix& w) {
    const Vector mean = column_mean(w);
    Vector var(w.width(), 0.0);
    for (std::size_t k = 0; k < w.num_clients(); ++k) {
        auto row = w.data.row(k);
        for (std::size_t m = 0; m < var.size(); ++m) {
            const double d = row[m] - mean[m];
            var[m] += d * d;
        }
    }
    const double n = static_cast<double>(w.num_clients());
    Vector cv(w.width());
    for (std::size_t m = 0; m < cv.size(); ++m)
        cv[m] = std::sqrt(var[m] / n) / (std::abs(mean[m]) + kCvEpsilon);
    return cv;
}

/// Min-max scaling into [0,1]. A constant input maps to all zeros.
inline Vector normalize_cv(std::span<const double> cv) {
    Vector out(cv.size(), 0.0);
    if (cv.empty()) return out;
    const auto [lo, hi] = std::minmax_element(cv.begin(), cv.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t m = 0; m < cv.size(); ++m) out[m] = (cv[m] - *lo) / range;
    return out;
}

struct LayerStats {
    Vector mean;
    Matrix sq_dev;
    Vector cv;
    Vector cv_norm;
};

inline LayerStats layer_stats(const LayerMatrix& w) {
    LayerStats s;
    s.mean = column_mean(w);
    s.sq_dev = squared_deviation(w, s.mean);
    s.cv = coefficient_of_variation(w);
    s.cv_norm = normalize_cv(s.cv);
    return s;
}

// ---------------------------------------------------------------------------
// Flattening

inline std::vector<Vector> flatten_model(const ModelParams& m) {
    std::vector<Vector> out;
    out.reserve(m.layers.size());
    for (const auto& l : m.layers) out.push_back(l.values);
    return out;
}

inline ModelParams unflatten_model(const std::vector<Vector>& vectors, const ModelParams& layout) {
    if (vectors.size() != layout.layers.size())
        throw Error("unflatten: expected " + std::to_string(layout.layers.size()) + " layers, got " +
                    std::to_string(vectors.size()));
    ModelParams out = layout;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        auto& l = out.layers[i];
        if (vectors[i].size() != l.size())
            throw Error("unflatten: layer '" + l.name + "' expects " + std::to_string(l.size()) +
                        " values, got " + std::to_string(vectors[i].size()));
        l.values = vectors[i];
    }
    return out;
}

/// Concatenates every layer into one vector (used for distance computations).
inline Vector concat_values(const ModelParams& m) {
    Vector out;
    out.reserve(m.parameter_count());
    for (const auto& l : m.layers) out.insert(out.end(), l.values.begin(), l.values.end());
    return out;
}

inline double l2_distance(const ModelParams& a, const ModelParams& b) {
    require_same_structure(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto& x = a.layers[i].values;
        const auto& y = b.layers[i].values;
        for (std::size_t j = 0; j < x.size(); ++j) acc += (x[j] - y[j]) * (x[j] - y[j]);
    }
    return std::sqrt(acc);
}

}  // namespace fedpake
