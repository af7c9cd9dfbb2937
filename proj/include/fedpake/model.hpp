#pragma once

/// @file model.hpp
/// @brief Multilayer perceptron with hand-written backpropagation, softmax
/// cross-entropy, and local SGD training (optionally FedProx-regularized).
///
/// Parameters are stored as ModelParams with, per dense layer `i`,
/// "dense<i>.weight" of shape [out, in] and "dense<i>.bias" of shape [out].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedpake/data.hpp"
#include "fedpake/params.hpp"
#include "fedpake/seed.hpp"

namespace fedpake {

enum class Activation { relu, tanh };

struct MLPSpec {
    std::vector<std::size_t> layer_sizes;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;

    std::size_t num_dense() const noexcept { return layer_sizes.size() - 1; }

    void validate() const {
        if (layer_sizes.size() < 2) throw Error("MLP needs at least an input and an output size");
        for (auto s : layer_sizes)
            if (s == 0) throw Error("MLP layer sizes must be positive");
        if (layer_sizes.back() < 2) throw Error("MLP output size must be >= 2");
    }
};

struct MLPState {
    MLPSpec spec;
    ModelParams params;

    const Vector& weight(std::size_t i) const { return params.layers[2 * i].values; }
    const Vector& bias(std::size_t i) const { return params.layers[2 * i + 1].values; }
};

using Gradient = ModelParams;

struct LocalTrainConfig {
    double learning_rate = 0.05;
    std::size_t batch_size = 64;
    std::size_t local_epochs = 1;
    /// 0 disables the proximal term.
    double prox_mu = 0.0;

    void validate() const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be >= 0");
        if (batch_size == 0) throw Error("batch_size must be positive");
        if (local_epochs == 0) throw Error("local_epochs must be positive");
        if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu)) throw Error("prox_mu must be >= 0");
    }
};

/// Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases zero.
inline MLPState init_mlp(const MLPSpec& spec) {
    spec.validate();
    MLPState state{spec, {}};
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < spec.num_dense(); ++i) {
        const std::size_t in = spec.layer_sizes[i];
        const std::size_t out = spec.layer_sizes[i + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        LayerTensor w{"dense" + std::to_string(i) + ".weight", {out, in}, Vector(out * in)};
        for (double& v : w.values) v = u(rng);
        LayerTensor b{"dense" + std::to_string(i) + ".bias", {out}, Vector(out, 0.0)};
        state.params.layers.push_back(std::move(w));
        state.params.layers.push_back(std::move(b));
    }
    return state;
}

/// Rebinds a parameter set (e.g. a received global model) to an architecture.
inline MLPState with_params(const MLPSpec& spec, ModelParams params) {
    MLPState state = init_mlp(MLPSpec{spec.layer_sizes, spec.activation, 0});
    require_same_structure(state.params, params);
    state.params = std::move(params);
    return state;
}

namespace detail {

inline double activate(Activation a, double z) noexcept { return a == Activation::relu ? std::max(z, 0.0) : std::tanh(z); }

/// Derivative expressed through the pre-activation z and the activation value h.
inline double activate_grad(Activation a, double z, double h) noexcept {
    return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - h * h;
}

struct ForwardCache {
    std::vector<Matrix> pre;   // per dense layer, batch x out
    std::vector<Matrix> post;  // post[0] = input, post[i+1] = activation of layer i (last = logits)
};

inline ForwardCache forward_cached(const MLPState& s, const Dataset& ds, std::span<const std::size_t> rows) {
    if (ds.dim() != s.spec.layer_sizes.front())
        throw Error("feature width " + std::to_string(ds.dim()) + " does not match MLP input size " +
                    std::to_string(s.spec.layer_sizes.front()));
    const std::size_t n = rows.size();
    ForwardCache c;
    Matrix x(n, ds.dim());
    for (std::size_t r = 0; r < n; ++r) {
        auto src = ds.features.row(rows[r]);
        std::copy(src.begin(), src.end(), x.row(r).begin());
    }
    c.post.push_back(std::move(x));
    const std::size_t layers = s.spec.num_dense();
    for (std::size_t i = 0; i < layers; ++i) {
        const std::size_t in = s.spec.layer_sizes[i];
        const std::size_t out = s.spec.layer_sizes[i + 1];
        const Vector& w = s.weight(i);
        const Vector& b = s.bias(i);
        const Matrix& a = c.post.back();
        Matrix z(n, out);
        for (std::size_t r = 0; r < n; ++r) {
            auto ar = a.row(r);
            for (std::size_t o = 0; o < out; ++o) {
                const double* wr = w.data() + o * in;
                double acc = b[o];
                for (std::size_t j = 0; j < in; ++j) acc += wr[j] * ar[j];
                z(r, o) = acc;
            }
        }
        Matrix h = z;
        if (i + 1 < layers)
            for (double& v : h.values()) v = activate(s.spec.activation, v);
        c.pre.push_back(std::move(z));
        c.post.push_back(std::move(h));
    }
    return c;
}

inline std::vector<std::size_t> all_rows(const Dataset& ds) {
    std::vector<std::size_t> rows(ds.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

}  // namespace detail

inline Matrix forward(const MLPState& s, const Dataset& ds, std::span<const std::size_t> rows) {
    return std::move(detail::forward_cached(s, ds, rows).post.back());
}

inline Matrix forward(const MLPState& s, const Dataset& ds) { return forward(s, ds, detail::all_rows(ds)); }

/// Mean softmax cross-entropy over the rows of `logits`.
inline double cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (logits.rows() != labels.size()) throw Error("cross_entropy: label count does not match logits");
    if (labels.empty()) throw Error("cross_entropy: empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= z.size())
            throw Error("label " + std::to_string(y) + " out of range for " + std::to_string(z.size()) + " classes");
        const double peak = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - peak);
        total += std::log(sum) + peak - z[static_cast<std::size_t>(y)];
    }
    return total / static_cast<double>(logits.rows());
}

struct LossAndGradient {
    double loss = 0.0;
    Gradient grad;
};

/// Mean cross-entropy over the selected rows and its gradient with respect to every parameter.
inline LossAndGradient backward(const MLPState& s, const Dataset& ds, std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error("backward: empty batch");
    const auto cache = detail::forward_cached(s, ds, rows);
    const std::size_t n = rows.size();
    const std::size_t layers = s.spec.num_dense();

    LossAndGradient out;
    out.grad = s.params;
    for (auto& l : out.grad.layers) std::fill(l.values.begin(), l.values.end(), 0.0);

    // dL/dlogits = (softmax - onehot) / n
    const Matrix& logits = cache.post.back();
    Matrix delta(n, logits.cols());
    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        auto z = logits.row(r);
        const int y = ds.labels[rows[r]];
        if (y < 0 || static_cast<std::size_t>(y) >= z.size())
            throw Error("label " + std::to_string(y) + " out of range for " + std::to_string(z.size()) + " classes");
        const double peak = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - peak);
        loss += std::log(sum) + peak - z[static_cast<std::size_t>(y)];
        for (std::size_t c = 0; c < z.size(); ++c) {
            const double p = std::exp(z[c] - peak) / sum;
            delta(r, c) = (p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) / static_cast<double>(n);
        }
    }
    out.loss = loss / static_cast<double>(n);

    for (std::size_t i = layers; i-- > 0;) {
        const std::size_t in = s.spec.layer_sizes[i];
        const std::size_t outw = s.spec.layer_sizes[i + 1];
        const Matrix& a = cache.post[i];
        Vector& gw = out.grad.layers[2 * i].values;
        Vector& gb = out.grad.layers[2 * i + 1].values;
        for (std::size_t r = 0; r < n; ++r) {
            auto ar = a.row(r);
            for (std::size_t o = 0; o < outw; ++o) {
                const double d = delta(r, o);
                gb[o] += d;
                double* g = gw.data() + o * in;
                for (std::size_t j = 0; j < in; ++j) g[j] += d * ar[j];
            }
        }
        if (i == 0) break;
        const Vector& w = s.weight(i);
        Matrix prev(n, in);
        const Matrix& z_prev = cache.pre[i - 1];
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < in; ++j) {
                double acc = 0.0;
                for (std::size_t o = 0; o < outw; ++o) acc += delta(r, o) * w[o * in + j];
                prev(r, j) = acc * detail::activate_grad(s.spec.activation, z_prev(r, j), a(r, j));
            }
        }
        delta = std::move(prev);
    }
    return out;
}

inline LossAndGradient backward(const MLPState& s, const Dataset& ds) { return backward(s, ds, detail::all_rows(ds)); }

struct LocalTrainResult {
    MLPState state;
    /// Mean of the mini-batch data losses seen during training (excludes the proximal term).
    double mean_loss = 0.0;
    std::size_t steps = 0;
};

/// Seeded mini-batch SGD for `local_epochs` passes. Each epoch reshuffles the
/// sample order; the last partial batch is kept. With prox_mu > 0 and a global
/// reference, each step descends loss + (mu/2) * ||w - w_global||^2.
inline LocalTrainResult train_local(const MLPState& start, const Dataset& ds, const LocalTrainConfig& cfg,
                                    const ModelParams* global_ref, std::uint64_t seed) {
    cfg.validate();
    if (ds.empty()) throw Error("train_local: empty dataset");
    if (global_ref) require_same_structure(start.params, *global_ref);
    const bool prox = cfg.prox_mu > 0.0 && global_ref != nullptr;

    LocalTrainResult res{start, 0.0, 0};
    Rng rng(seed);
    auto order = detail::all_rows(ds);
    double loss_sum = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, order.size() - at);
            auto step = backward(res.state, ds, std::span<const std::size_t>(order).subspan(at, len));
            loss_sum += step.loss;
            ++res.steps;
            for (std::size_t l = 0; l < res.state.params.layers.size(); ++l) {
                Vector& w = res.state.params.layers[l].values;
                const Vector& g = step.grad.layers[l].values;
                if (prox) {
                    const Vector& ref = global_ref->layers[l].values;
                    for (std::size_t j = 0; j < w.size(); ++j)
                        w[j] -= cfg.learning_rate * (g[j] + cfg.prox_mu * (w[j] - ref[j]));
                } else {
                    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= cfg.learning_rate * g[j];
                }
            }
        }
    }
    res.mean_loss = loss_sum / static_cast<double>(res.steps);
    return res;
}

struct Evaluation {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

/// Argmax accuracy (ties go to the lowest class index) and mean cross-entropy.
inline Evaluation evaluate(const MLPState& s, const Dataset& ds) {
    if (ds.empty()) throw Error("evaluate: empty dataset");
    const Matrix logits = forward(s, ds);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        const auto pred = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
        if (pred == ds.labels[r]) ++correct;
    }
    return {static_cast<double>(correct) / static_cast<double>(ds.size()), cross_entropy(logits, ds.labels)};
}

}  // namespace fedpake
