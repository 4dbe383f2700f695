#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "pointmpm/params.hpp"

namespace pointmpm::harness {

struct AdamWSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

/// Cosine decay from `peak` at step 0 to `floor` at `total` steps.
inline double cosine_lr(std::size_t step, std::size_t total, double peak, double floor) {
    if (total <= 1) return peak;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
    return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// Adaptive moments with decoupled weight decay. Decay applies only to
/// `.weight` matrices.
template <typename T>
class AdamW {
public:
    explicit AdamW(AdamWSettings settings = {}) : settings_(settings) {}

    void step(ParameterSet<T>& params, const Bindings<T>& grads, double lr) {
        ++steps_;
        const double c1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(steps_));
        for (const auto& [name, g] : grads) {
            auto it = params.find(name);
            if (it == params.end()) throw BindingError("optimizer: no parameter named '" + name + "'");
            Tensor<T>& p = it->second;
            if (p.shape() != g.shape()) throw ShapeError("optimizer: gradient shape mismatch for '" + name + "'");
            auto [mi, fresh] = first_.try_emplace(name, Tensor<T>(p.shape()));
            auto& m = mi->second;
            auto& v = second_.try_emplace(name, Tensor<T>(p.shape())).first->second;
            const bool decay = name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mv = settings_.beta1 * static_cast<double>(m[i]) + (1.0 - settings_.beta1) * gi;
                const double vv = settings_.beta2 * static_cast<double>(v[i]) + (1.0 - settings_.beta2) * gi * gi;
                m[i] = static_cast<T>(mv);
                v[i] = static_cast<T>(vv);
                double x = static_cast<double>(p[i]);
                if (decay) x -= lr * settings_.weight_decay * x;
                x -= lr * (mv / c1) / (std::sqrt(vv / c2) + settings_.eps);
                p[i] = static_cast<T>(x);
            }
        }
    }

    std::size_t steps() const { return steps_; }
    const Bindings<T>& first_moments() const { return first_; }
    const Bindings<T>& second_moments() const { return second_; }

    void restore(std::size_t steps, Bindings<T> first, Bindings<T> second) {
        steps_ = steps;
        first_ = std::move(first);
        second_ = std::move(second);
    }

private:
    AdamWSettings settings_;
    std::size_t steps_ = 0;
    Bindings<T> first_, second_;
};

} // namespace pointmpm::harness
