#pragma once

#include <cmath>
#include <string>

#include "pointmpm/numerics.hpp"
#include "pointmpm/random.hpp"

namespace pointmpm {

/// Named learnable tensors, ordered by name. Names are dotted paths whose
/// first component is the parameter group ("embedder", "encoder", ...).
template <typename T>
using ParameterSet = Bindings<T>;

/// Weight (in,out) uniform in +-sqrt(6/in), keeping activation scale through
/// relu stacks; bias (out) uniform in +-1/sqrt(in).
template <typename T>
void init_linear(ParameterSet<T>& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    const double wbound = std::sqrt(6.0) * bound;
    Tensor<T> w({in, out}), b({out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-wbound, wbound));
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<T>(rng.uniform(-bound, bound));
    params[prefix + ".weight"] = std::move(w);
    params[prefix + ".bias"] = std::move(b);
}

template <typename T>
void init_norm(ParameterSet<T>& params, const std::string& prefix, std::size_t width) {
    params[prefix + ".gain"] = Tensor<T>({width}, T(1));
    params[prefix + ".bias"] = Tensor<T>({width}, T(0));
}

template <typename T>
void init_vector(ParameterSet<T>& params, const std::string& name, std::size_t width, Rng& rng, double stddev) {
    Tensor<T> v({width});
    for (std::size_t i = 0; i < width; ++i) v[i] = static_cast<T>(stddev * rng.normal());
    params[name] = std::move(v);
}

template <typename T>
Var<T> linear(Scope<T>& s, const std::string& prefix, const Var<T>& x) {
    return add(matmul(x, s.leaf(prefix + ".weight")), s.leaf(prefix + ".bias"));
}

template <typename T>
Var<T> norm(Scope<T>& s, const std::string& prefix, const Var<T>& x) {
    return add(mul(layer_norm(x), s.leaf(prefix + ".gain")), s.leaf(prefix + ".bias"));
}

template <typename U, typename T>
ParameterSet<U> cast_params(const ParameterSet<T>& params) {
    ParameterSet<U> out;
    for (const auto& [name, t] : params) out.emplace(name, t.template cast<U>());
    return out;
}

/// Entries whose group (first dotted component) equals `group`.
template <typename T>
ParameterSet<T> group_params(const ParameterSet<T>& params, const std::string& group) {
    ParameterSet<T> out;
    const std::string prefix = group + ".";
    for (const auto& [name, t] : params) {
        if (name.compare(0, prefix.size(), prefix) == 0) out.emplace(name, t);
    }
    return out;
}

inline std::string param_group(const std::string& name) { return name.substr(0, name.find('.')); }

template <typename T>
std::size_t parameter_count(const ParameterSet<T>& params) {
    std::size_t n = 0;
    for (const auto& kv : params) n += kv.second.size();
    return n;
}

} // namespace pointmpm
