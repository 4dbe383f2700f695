#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "pointmpm/numerics/ops.hpp"

namespace pointmpm {

template <typename T>
using Bindings = std::map<std::string, Tensor<T>>;

/// Resolves named leaves for one graph construction. Each name maps to a
/// single leaf node, created on first use. Bindings added by reference must
/// outlive the scope.
template <typename T>
class Scope {
public:
    Scope() = default;

    explicit Scope(const Bindings<T>& bindings, bool trainable = true) { bind_all(bindings, trainable); }

    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

    void bind(const std::string& name, Tensor<T> value, bool trainable = true) {
        Entry e;
        e.owned = std::move(value);
        e.trainable = trainable;
        entries_[name] = std::move(e);
    }

    void bind_ref(const std::string& name, const Tensor<T>& value, bool trainable = true) {
        Entry e;
        e.ref = &value;
        e.trainable = trainable;
        entries_[name] = std::move(e);
    }

    void bind_all(const Bindings<T>& bindings, bool trainable = true) {
        for (const auto& [name, t] : bindings) bind_ref(name, t, trainable);
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Var<T> leaf(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw BindingError("unbound leaf '" + name + "'");
        Entry& e = it->second;
        if (!e.var) {
            const Tensor<T>& t = e.ref ? *e.ref : *e.owned;
            e.var = pointmpm::leaf(t, e.trainable);
        }
        return e.var;
    }

    /// Gradients of `root` w.r.t. every trainable leaf bound in this scope.
    /// Leaves never referenced get zero gradients.
    Bindings<T> gradients(const Var<T>& root) {
        std::vector<std::string> names;
        std::vector<Var<T>> vars;
        for (auto& [name, e] : entries_) {
            if (!e.trainable) continue;
            names.push_back(name);
            vars.push_back(leaf(name));
        }
        auto gs = grad(root, std::span<const Var<T>>(vars));
        Bindings<T> out;
        for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], std::move(gs[i]));
        return out;
    }

private:
    struct Entry {
        const Tensor<T>* ref = nullptr;
        std::optional<Tensor<T>> owned;
        bool trainable = true;
        Var<T> var;
    };
    std::map<std::string, Entry> entries_;
};

/// A computation over named leaves. Built fresh against a Scope every time it
/// is evaluated, so data-dependent structure (neighbor graphs, masks) is fine.
template <typename T>
using Expression = std::function<Var<T>(Scope<T>&)>;

template <typename T>
Tensor<T> evaluate(const Expression<T>& expr, const Bindings<T>& bindings) {
    Scope<T> scope(bindings, false);
    return expr(scope).value();
}

template <typename T>
Bindings<T> gradient(const Expression<T>& expr, const Bindings<T>& bindings, const std::set<std::string>& wrt) {
    Scope<T> scope;
    for (const auto& name : wrt) {
        if (!bindings.count(name)) throw BindingError("gradient requested for unbound leaf '" + name + "'");
    }
    for (const auto& [name, t] : bindings) scope.bind_ref(name, t, wrt.count(name) != 0);
    Var<T> root = expr(scope);
    return scope.gradients(root);
}

/// Worst elementwise relative error between the analytic gradient and
/// central finite differences, with denominator max(|a|, |b|, 1e-8).
/// Checks every leaf in `wrt`, or every bound leaf when `wrt` is empty.
template <typename T>
T grad_check(const Expression<T>& expr, const Bindings<T>& bindings, T eps = T(1e-5),
             std::set<std::string> wrt = {}) {
    if (!(eps > T(0))) throw ArgumentError("grad_check eps must be positive");
    if (wrt.empty()) {
        for (const auto& kv : bindings) wrt.insert(kv.first);
    }
    const Bindings<T> analytic = gradient(expr, bindings, wrt);
    Bindings<T> probe = bindings;
    T worst = 0;
    for (const auto& name : wrt) {
        Tensor<T>& x = probe.at(name);
        const Tensor<T>& a = analytic.at(name);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const T orig = x[i];
            x[i] = orig + eps;
            const T fp = evaluate(expr, probe)[0];
            x[i] = orig - eps;
            const T fm = evaluate(expr, probe)[0];
            x[i] = orig;
            const T numeric = (fp - fm) / (T(2) * eps);
            const T denom = std::max({std::abs(a[i]), std::abs(numeric), T(1e-8)});
            worst = std::max(worst, std::abs(a[i] - numeric) / denom);
        }
    }
    return worst;
}

} // namespace pointmpm
