#pragma once

// Differentiable primitives. Every op computes its value eagerly and records
// a closure that accumulates its vector-Jacobian product into its inputs.

#include <cmath>
#include <numbers>
#include <vector>

#include "pointmpm/numerics/autodiff.hpp"

namespace pointmpm {

namespace detail {

inline std::size_t resolve_axis(int axis, std::size_t rank) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

// rhs broadcasts onto lhs when equal, a trailing suffix, or a single element.
inline void check_broadcast(const Shape& lhs, const Shape& rhs, const char* op) {
    if (shape_size(rhs) == 1) return;
    if (rhs.size() <= lhs.size() && std::equal(rhs.rbegin(), rhs.rend(), lhs.rbegin())) return;
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(rhs) + " onto " + shape_str(lhs));
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

} // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    detail::check_broadcast(a.shape(), b.shape(), "add");
    const auto& av = a.value();
    const auto& bv = b.value();
    const std::size_t m = bv.size();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i % m];
    return make_op<T>("add", std::move(out), {a, b}, [m](const Node<T>&, const Tensor<T>& g, auto pg) {
        if (pg[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
        }
        if (pg[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i % m] += g[i];
        }
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    detail::check_broadcast(a.shape(), b.shape(), "sub");
    const auto& av = a.value();
    const auto& bv = b.value();
    const std::size_t m = bv.size();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i % m];
    return make_op<T>("sub", std::move(out), {a, b}, [m](const Node<T>&, const Tensor<T>& g, auto pg) {
        if (pg[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
        }
        if (pg[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i % m] -= g[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    detail::check_broadcast(a.shape(), b.shape(), "mul");
    const auto& av = a.value();
    const auto& bv = b.value();
    const std::size_t m = bv.size();
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i % m];
    return make_op<T>("mul", std::move(out), {a, b}, [m](const Node<T>& self, const Tensor<T>& g, auto pg) {
        const auto& x = self.parents[0]->value;
        const auto& y = self.parents[1]->value;
        if (pg[0]) {
            for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * y[i % m];
        }
        if (pg[1]) {
            for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i % m] += g[i] * x[i];
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
    Tensor<T> out = detail::map(a.value(), [c](T v) { return v * c; });
    return make_op<T>("scale", std::move(out), {a}, [c](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += c * g[i];
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
    Tensor<T> out = detail::map(a.value(), [c](T v) { return v + c; });
    return make_op<T>("add_scalar", std::move(out), {a}, [](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    });
}

/// Broadcasts a single-element tensor to `shape`.
template <typename T>
Var<T> broadcast_to(const Var<T>& a, const Shape& shape) {
    if (a.value().size() != 1) throw ShapeError("broadcast_to expects a single-element input");
    Tensor<T> out(shape, a.value()[0]);
    return make_op<T>("broadcast", std::move(out), {a}, [](const Node<T>&, const Tensor<T>& g, auto pg) {
        T s = 0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
        (*pg[0])[0] += s;
    });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
    Tensor<T> out = detail::map(a.value(), [](T v) { return std::exp(v); });
    return make_op<T>("exp", std::move(out), {a}, [](const Node<T>& self, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * self.value[i];
    });
}

template <typename T>
Var<T> log(const Var<T>& a) {
    Tensor<T> out = detail::map(a.value(), [](T v) { return std::log(v); });
    return make_op<T>("log", std::move(out), {a}, [](const Node<T>& self, const Tensor<T>& g, auto pg) {
        const auto& x = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] / x[i];
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> out = detail::map(a.value(), [](T v) { return v > T(0) ? v : T(0); });
    return make_op<T>("relu", std::move(out), {a}, [](const Node<T>& self, const Tensor<T>& g, auto pg) {
        const auto& x = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] > T(0)) (*pg[0])[i] += g[i];
        }
    });
}

/// Exact (erf-based) GELU.
template <typename T>
Var<T> gelu(const Var<T>& a) {
    const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
    Tensor<T> out = detail::map(a.value(), [&](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
    return make_op<T>("gelu", std::move(out), {a}, [inv_sqrt2](const Node<T>& self, const Tensor<T>& g, auto pg) {
        const auto& x = self.parents[0]->value;
        const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T v = x[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
            (*pg[0])[i] += g[i] * (cdf + v * pdf);
        }
    });
}

/// (m,k) x (k,n) -> (m,n).
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const auto& A = a.value();
    const auto& B = b.value();
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    }
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> C({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        T* c = &C[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const T av = A[i * k + p];
            const T* brow = &B[p * n];
            for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
        }
    }
    return make_op<T>("matmul", std::move(C), {a, b}, [m, k, n](const Node<T>& self, const Tensor<T>& g, auto pg) {
        const auto& A = self.parents[0]->value;
        const auto& B = self.parents[1]->value;
        if (pg[0]) {
            auto& dA = *pg[0];
            // dA += g B^T, accumulated row-wise against B^T so the inner loop vectorizes
            std::vector<T> bt(k * n);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
            for (std::size_t i = 0; i < m; ++i) {
                const T* grow = &g[i * n];
                T* drow = &dA[i * k];
                for (std::size_t j = 0; j < n; ++j) {
                    const T gv = grow[j];
                    const T* btrow = &bt[j * k];
                    for (std::size_t p = 0; p < k; ++p) drow[p] += gv * btrow[p];
                }
            }
        }
        if (pg[1]) {
            auto& dB = *pg[1];
            for (std::size_t i = 0; i < m; ++i) {
                const T* grow = &g[i * n];
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = A[i * k + p];
                    T* drow = &dB[p * n];
                    for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
                }
            }
        }
    });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
    const auto& A = a.value();
    if (A.rank() != 2) throw ShapeError("transpose expects a matrix");
    const std::size_t m = A.dim(0), n = A.dim(1);
    Tensor<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
    return make_op<T>("transpose", std::move(out), {a}, [m, n](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) (*pg[0])[i * n + j] += g[j * m + i];
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape));
    return make_op<T>("reshape", std::move(out), {a}, [](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    });
}

template <typename T>
Var<T> softmax(const Var<T>& a, int axis = -1) {
    const auto& x = a.value();
    const auto s = split_axis(x.shape(), detail::resolve_axis(axis, x.rank()));
    Tensor<T> y(x.shape());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            T mx = x[base];
            for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, x[base + e * s.inner]);
            T sum = 0;
            for (std::size_t e = 0; e < s.extent; ++e) {
                const T v = std::exp(x[base + e * s.inner] - mx);
                y[base + e * s.inner] = v;
                sum += v;
            }
            for (std::size_t e = 0; e < s.extent; ++e) y[base + e * s.inner] /= sum;
        }
    }
    return make_op<T>("softmax", std::move(y), {a}, [s](const Node<T>& self, const Tensor<T>& g, auto pg) {
        const auto& y = self.value;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.extent * s.inner + in;
                T dot = 0;
                for (std::size_t e = 0; e < s.extent; ++e) dot += g[base + e * s.inner] * y[base + e * s.inner];
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t i = base + e * s.inner;
                    (*pg[0])[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

template <typename T>
Var<T> log_softmax(const Var<T>& a, int axis = -1) {
    const auto& x = a.value();
    const auto s = split_axis(x.shape(), detail::resolve_axis(axis, x.rank()));
    Tensor<T> y(x.shape());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            T mx = x[base];
            for (std::size_t e = 1; e < s.extent; ++e) mx = std::max(mx, x[base + e * s.inner]);
            T sum = 0;
            for (std::size_t e = 0; e < s.extent; ++e) sum += std::exp(x[base + e * s.inner] - mx);
            const T lse = mx + std::log(sum);
            for (std::size_t e = 0; e < s.extent; ++e) y[base + e * s.inner] = x[base + e * s.inner] - lse;
        }
    }
    return make_op<T>("log_softmax", std::move(y), {a}, [s](const Node<T>& self, const Tensor<T>& g, auto pg) {
        const auto& y = self.value;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.extent * s.inner + in;
                T gsum = 0;
                for (std::size_t e = 0; e < s.extent; ++e) gsum += g[base + e * s.inner];
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t i = base + e * s.inner;
                    (*pg[0])[i] += g[i] - std::exp(y[i]) * gsum;
                }
            }
        }
    });
}

/// Normalizes each row over the last axis to zero mean and unit variance.
/// No affine part; compose with mul/add for gain and bias.
template <typename T>
Var<T> layer_norm(const Var<T>& a, T eps = T(1e-5)) {
    const auto& x = a.value();
    const std::size_t rows = x.rows(), n = x.cols();
    Tensor<T> y(x.shape());
    std::vector<T> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = &x[r * n];
        T mean = 0;
        for (std::size_t j = 0; j < n; ++j) mean += xr[j];
        mean /= T(n);
        T var = 0;
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= T(n);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) y[r * n + j] = (xr[j] - mean) * inv_std[r];
    }
    return make_op<T>("layer_norm", std::move(y), {a},
                      [rows, n, inv_std = std::move(inv_std)](const Node<T>& self, const Tensor<T>& g, auto pg) {
                          const auto& y = self.value;
                          for (std::size_t r = 0; r < rows; ++r) {
                              T gmean = 0, gymean = 0;
                              for (std::size_t j = 0; j < n; ++j) {
                                  gmean += g[r * n + j];
                                  gymean += g[r * n + j] * y[r * n + j];
                              }
                              gmean /= T(n);
                              gymean /= T(n);
                              for (std::size_t j = 0; j < n; ++j) {
                                  const std::size_t i = r * n + j;
                                  (*pg[0])[i] += inv_std[r] * (g[i] - gmean - y[i] * gymean);
                              }
                          }
                      });
}

/// Max over `axis` (removed from the output). Ties route the gradient to the
/// lowest index.
template <typename T>
Var<T> max(const Var<T>& a, int axis) {
    const auto& x = a.value();
    const std::size_t ax = detail::resolve_axis(axis, x.rank());
    const auto s = split_axis(x.shape(), ax);
    Tensor<T> y(drop_axis(x.shape(), ax));
    std::vector<std::size_t> arg(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            std::size_t best = base;
            for (std::size_t e = 1; e < s.extent; ++e) {
                if (x[base + e * s.inner] > x[best]) best = base + e * s.inner;
            }
            y[o * s.inner + in] = x[best];
            arg[o * s.inner + in] = best;
        }
    }
    return make_op<T>("max", std::move(y), {a}, [arg = std::move(arg)](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < arg.size(); ++i) (*pg[0])[arg[i]] += g[i];
    });
}

template <typename T>
Var<T> sum(const Var<T>& a, int axis) {
    const auto& x = a.value();
    const std::size_t ax = detail::resolve_axis(axis, x.rank());
    const auto s = split_axis(x.shape(), ax);
    Tensor<T> y(drop_axis(x.shape(), ax));
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t in = 0; in < s.inner; ++in)
                y[o * s.inner + in] += x[(o * s.extent + e) * s.inner + in];
    return make_op<T>("sum", std::move(y), {a}, [s](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t in = 0; in < s.inner; ++in)
                    (*pg[0])[(o * s.extent + e) * s.inner + in] += g[o * s.inner + in];
    });
}

template <typename T>
Var<T> mean(const Var<T>& a, int axis) {
    const std::size_t ax = detail::resolve_axis(axis, a.value().rank());
    return scale(sum(a, axis), T(1) / T(a.shape()[ax]));
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T s = 0;
    for (auto v : a.value().data()) s += v;
    return make_op<T>("sum_all", Tensor<T>::scalar(s), {a}, [](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < pg[0]->size(); ++i) (*pg[0])[i] += g[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    return scale(sum_all(a), T(1) / T(a.value().size()));
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    const Shape& first = parts[0].shape();
    const std::size_t ax = detail::resolve_axis(axis, first.size());
    Shape out_shape = first;
    out_shape[ax] = 0;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        Shape a = p.shape(), b = first;
        if (a.size() != b.size()) throw ShapeError("concat rank mismatch");
        a[ax] = b[ax] = 0;
        if (a != b) throw ShapeError("concat: incompatible shapes " + shape_str(p.shape()) + " vs " + shape_str(first));
        extents.push_back(p.shape()[ax]);
        out_shape[ax] += p.shape()[ax];
    }
    const auto s = split_axis(out_shape, ax);
    Tensor<T> y(out_shape);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& x = parts[k].value();
        const std::size_t e = extents[k];
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(&x[o * e * s.inner], e * s.inner, &y[(o * s.extent + offset) * s.inner]);
        offset += e;
    }
    return make_op<T>("concat", std::move(y), parts, [s, extents](const Node<T>&, const Tensor<T>& g, auto pg) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < extents.size(); ++k) {
            const std::size_t e = extents[k];
            if (pg[k]) {
                for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t i = 0; i < e * s.inner; ++i)
                        (*pg[k])[o * e * s.inner + i] += g[(o * s.extent + offset) * s.inner + i];
            }
            offset += e;
        }
    });
}

/// Selects entries along axis 0. Indices may repeat; gradients scatter-add.
template <typename T>
Var<T> gather(const Var<T>& a, std::vector<std::size_t> indices) {
    const auto& x = a.value();
    if (indices.empty()) throw ShapeError("gather with no indices");
    const std::size_t n = x.dim(0);
    const std::size_t stride = x.size() / n;
    Shape out_shape = x.shape();
    out_shape[0] = indices.size();
    Tensor<T> y(out_shape);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= n) {
            throw ShapeError("gather index " + std::to_string(indices[r]) + " out of range " + std::to_string(n));
        }
        std::copy_n(&x[indices[r] * stride], stride, &y[r * stride]);
    }
    return make_op<T>("gather", std::move(y), {a},
                      [stride, indices = std::move(indices)](const Node<T>&, const Tensor<T>& g, auto pg) {
                          for (std::size_t r = 0; r < indices.size(); ++r)
                              for (std::size_t j = 0; j < stride; ++j)
                                  (*pg[0])[indices[r] * stride + j] += g[r * stride + j];
                      });
}

/// Half-open slice [begin, end) along the last axis.
template <typename T>
Var<T> slice_last(const Var<T>& a, std::size_t begin, std::size_t end) {
    const auto& x = a.value();
    const std::size_t n = x.cols();
    if (begin >= end || end > n) throw ShapeError("slice_last: bad range");
    const std::size_t w = end - begin, rows = x.rows();
    Shape out_shape = x.shape();
    out_shape.back() = w;
    Tensor<T> y(out_shape);
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(&x[r * n + begin], w, &y[r * w]);
    return make_op<T>("slice", std::move(y), {a}, [rows, n, w, begin](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < w; ++j) (*pg[0])[r * n + begin + j] += g[r * w + j];
    });
}

template <typename T>
Var<T> l2_normalize(const Var<T>& a, int axis = -1, T eps = T(1e-12)) {
    const auto& x = a.value();
    const auto s = split_axis(x.shape(), detail::resolve_axis(axis, x.rank()));
    Tensor<T> y(x.shape());
    std::vector<T> norms(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            T ss = 0;
            for (std::size_t e = 0; e < s.extent; ++e) ss += x[base + e * s.inner] * x[base + e * s.inner];
            const T nrm = std::max(std::sqrt(ss), eps);
            norms[o * s.inner + in] = nrm;
            for (std::size_t e = 0; e < s.extent; ++e) y[base + e * s.inner] = x[base + e * s.inner] / nrm;
        }
    }
    return make_op<T>("l2_normalize", std::move(y), {a},
                      [s, norms = std::move(norms)](const Node<T>& self, const Tensor<T>& g, auto pg) {
                          const auto& y = self.value;
                          for (std::size_t o = 0; o < s.outer; ++o) {
                              for (std::size_t in = 0; in < s.inner; ++in) {
                                  const std::size_t base = o * s.extent * s.inner + in;
                                  T dot = 0;
                                  for (std::size_t e = 0; e < s.extent; ++e)
                                      dot += g[base + e * s.inner] * y[base + e * s.inner];
                                  const T nrm = norms[o * s.inner + in];
                                  for (std::size_t e = 0; e < s.extent; ++e) {
                                      const std::size_t i = base + e * s.inner;
                                      (*pg[0])[i] += (g[i] - y[i] * dot) / nrm;
                                  }
                              }
                          }
                      });
}

/// Value copy with no gradient path.
template <typename T>
Var<T> detach(const Var<T>& a) {
    return constant(a.value());
}

/// Forward: one-hot of the row argmax over the last axis (ties to the lowest
/// index). Backward: identity, i.e. the gradient of the relaxed input.
template <typename T>
Var<T> straight_through_onehot(const Var<T>& a) {
    const auto& x = a.value();
    const std::size_t rows = x.rows(), n = x.cols();
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (x[r * n + j] > x[r * n + best]) best = j;
        }
        y[r * n + best] = T(1);
    }
    return make_op<T>("straight_through", std::move(y), {a}, [](const Node<T>&, const Tensor<T>& g, auto pg) {
        for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    });
}

} // namespace pointmpm
