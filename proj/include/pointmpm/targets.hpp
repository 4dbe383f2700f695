#pragma once

// Multi-choice supervision for masked point modeling: temperature-softened
// token distributions, refinement by inter-patch similarity of the encoder's
// representations, scheduled mixing, and the soft-label prediction loss.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pointmpm/params.hpp"
#include "pointmpm/pointops.hpp"

namespace pointmpm {

/// Row-wise softmax(z / tau), stabilized by subtracting the row max.
template <typename T>
Tensor<T> soften(const Tensor<T>& z, T tau) {
    if (!(tau > T(0))) throw ArgumentError("soften: temperature must be positive");
    Tensor<T> p(z.shape());
    const std::size_t n = z.cols();
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const T* zr = &z[r * n];
        T mx = zr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, zr[j]);
        T sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            p[r * n + j] = std::exp((zr[j] - mx) / tau);
            sum += p[r * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) p[r * n + j] /= sum;
    }
    return p;
}

/// W[i][k] = exp<h_i,h_k> / sum_j exp<h_i,h_j> for unit-norm rows h.
template <typename T>
Tensor<T> similarity(const Tensor<T>& h) {
    const std::size_t g = h.rows(), d = h.cols();
    for (std::size_t i = 0; i < g; ++i) {
        T n = 0;
        for (std::size_t t = 0; t < d; ++t) n += h[i * d + t] * h[i * d + t];
        if (std::abs(std::sqrt(n) - T(1)) > T(1e-4)) {
            throw ArgumentError("similarity: row " + std::to_string(i) + " is not unit-norm");
        }
    }
    Tensor<T> w({g, g});
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t k = 0; k < g; ++k) {
            T dot = 0;
            for (std::size_t t = 0; t < d; ++t) dot += h[i * d + t] * h[k * d + t];
            w.at(i, k) = dot;
        }
        // Inner products of unit vectors lie in [-1, 1]; exp needs no shift.
        T sum = 0;
        for (std::size_t k = 0; k < g; ++k) {
            w.at(i, k) = std::exp(w.at(i, k));
            sum += w.at(i, k);
        }
        for (std::size_t k = 0; k < g; ++k) w.at(i, k) /= sum;
    }
    return w;
}

/// omega * P + (1 - omega) * (W P). The result is a plain tensor: targets
/// carry no gradient path back into z, h or W.
template <typename T>
Tensor<T> mix_targets(const Tensor<T>& probs, const Tensor<T>& w, T omega) {
    if (!(omega >= T(0) && omega <= T(1))) throw ArgumentError("mix_targets: omega must lie in [0, 1]");
    const std::size_t g = probs.rows(), v = probs.cols();
    if (w.shape() != Shape{g, g}) throw ShapeError("mix_targets: similarity must be (g, g)");
    if (omega == T(1)) return probs;
    Tensor<T> out(probs.shape());
    for (std::size_t i = 0; i < g; ++i) {
        T* o = &out[i * v];
        for (std::size_t k = 0; k < g; ++k) {
            const T wik = w.at(i, k);
            const T* pk = &probs[k * v];
            for (std::size_t j = 0; j < v; ++j) o[j] += wik * pk[j];
        }
        if (omega != T(0)) {
            for (std::size_t j = 0; j < v; ++j) o[j] = omega * probs[i * v + j] + (T(1) - omega) * o[j];
        }
    }
    return out;
}

struct OmegaSchedule {
    std::size_t warmup_epochs = 30;
    double floor = 0.8;
    std::size_t total_epochs = 300;
    bool warmup = true;  // false: omega pinned to `floor` from the first epoch

    void validate() const {
        if (!(floor >= 0.0 && floor <= 1.0)) throw ConfigError("omega floor must lie in [0, 1]");
        if (warmup && warmup_epochs >= total_epochs) {
            throw ConfigError("omega warm-up (" + std::to_string(warmup_epochs) +
                              " epochs) must be shorter than training (" + std::to_string(total_epochs) + ")");
        }
    }
};

/// 1 during warm-up, then cosine decay from 1 to `floor` at total_epochs.
inline double omega_at(std::size_t epoch, const OmegaSchedule& sched) {
    sched.validate();
    if (epoch > sched.total_epochs) throw ArgumentError("omega_at: epoch beyond the schedule");
    if (!sched.warmup) return sched.floor;
    if (epoch < sched.warmup_epochs) return 1.0;
    const double t = static_cast<double>(epoch - sched.warmup_epochs) /
                     static_cast<double>(sched.total_epochs - sched.warmup_epochs);
    return sched.floor + (1.0 - sched.floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// Mean over masked rows of the soft cross-entropy
/// -sum_k target[i,k] * log softmax(pred[i])_k.
template <typename T>
Var<T> mpm_loss(const Var<T>& pred_logits, const Tensor<T>& targets, const MaskSet& mask) {
    if (mask.indices.empty()) throw ArgumentError("mpm_loss: empty mask");
    if (pred_logits.shape() != targets.shape() || pred_logits.shape().size() != 2) {
        throw ShapeError("mpm_loss: predictions " + shape_str(pred_logits.shape()) + " vs targets " +
                         shape_str(targets.shape()));
    }
    const std::size_t v = targets.cols();
    Tensor<T> picked({mask.indices.size(), v});
    for (std::size_t r = 0; r < mask.indices.size(); ++r) {
        if (mask.indices[r] >= targets.rows()) throw ArgumentError("mpm_loss: mask index out of range");
        std::copy_n(&targets[mask.indices[r] * v], v, &picked[r * v]);
    }
    auto logp = gather(log_softmax(pred_logits, -1), mask.indices);
    return scale(sum_all(mul(logp, constant(std::move(picked)))), T(-1) / T(mask.indices.size()));
}

inline const std::string kPredictionHead = "prediction_head";

template <typename T>
void init_prediction_head(ParameterSet<T>& params, std::size_t width, std::size_t vocab, Rng& rng) {
    init_linear(params, kPredictionHead + ".fc1", width, width, rng);
    init_linear(params, kPredictionHead + ".fc2", width, vocab, rng);
}

/// Shared two-layer MLP per patch representation: (g, d) -> (g, vocab).
template <typename T>
Var<T> prediction_head(Scope<T>& s, const Var<T>& h) {
    const auto& w = s.leaf(kPredictionHead + ".fc1.weight");
    if (h.shape().size() != 2 || h.shape()[1] != w.shape()[0]) {
        throw ShapeError("prediction_head: expected width " + std::to_string(w.shape()[0]) + ", got " +
                         shape_str(h.shape()));
    }
    return linear(s, kPredictionHead + ".fc2", gelu(linear(s, kPredictionHead + ".fc1", h)));
}

/// Graph-level construction of the mixed targets from live logits z and
/// representations h, cut from the graph before use as supervision.
template <typename T>
Var<T> multi_choice_targets(const Var<T>& z, const Var<T>& h, T tau, T omega) {
    auto probs = softmax(scale(z, T(1) / tau), -1);
    auto w = softmax(matmul(h, transpose(h)), -1);
    auto mixed = add(scale(probs, omega), scale(matmul(w, probs), T(1) - omega));
    return detach(mixed);
}

} // namespace pointmpm
