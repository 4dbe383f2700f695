#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "pointmpm/numerics.hpp"
#include "pointmpm/random.hpp"

namespace pointmpm {

using Point3 = std::array<double, 3>;

inline double squared_distance(const Point3& a, const Point3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
    std::vector<Point3> points;
    int label = -1;  // -1 when unlabeled
};

/// Centers the cloud at its centroid and scales it so the farthest point has
/// unit norm. Applied once on ingestion.
inline PointCloud normalize_cloud(PointCloud cloud) {
    if (cloud.points.empty()) throw ArgumentError("point cloud must contain at least one point");
    Point3 c{0, 0, 0};
    for (const auto& p : cloud.points) {
        for (int d = 0; d < 3; ++d) {
            if (!std::isfinite(p[d])) throw NonFiniteError("point cloud contains a non-finite coordinate");
            c[d] += p[d];
        }
    }
    for (auto& v : c) v /= static_cast<double>(cloud.points.size());
    double r = 0;
    for (auto& p : cloud.points) {
        for (int d = 0; d < 3; ++d) p[d] -= c[d];
        r = std::max(r, std::sqrt(squared_distance(p, {0, 0, 0})));
    }
    if (r > 0) {
        for (auto& p : cloud.points)
            for (auto& v : p) v /= r;
    }
    return cloud;
}

/// Greedy farthest point sampling. The first pick is `start`; each later pick
/// maximizes the distance to the nearest prior pick, ties to the lowest index.
inline std::vector<std::size_t> farthest_point_sample(const std::vector<Point3>& points, std::size_t count,
                                                      std::size_t start = 0) {
    const std::size_t n = points.size();
    if (count > n) {
        throw ArgumentError("farthest_point_sample: requested " + std::to_string(count) + " of " +
                            std::to_string(n) + " points");
    }
    if (count == 0) return {};
    if (start >= n) throw ArgumentError("farthest_point_sample: start index out of range");

    std::vector<std::size_t> picks{start};
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<bool> taken(n, false);
    taken[start] = true;
    std::size_t last = start;
    while (picks.size() < count) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            dist[i] = std::min(dist[i], squared_distance(points[i], points[last]));
            if (best == n || dist[i] > dist[best]) best = i;
        }
        taken[best] = true;
        picks.push_back(best);
        last = best;
    }
    return picks;
}

/// For each query, the indices of the k closest points sorted by ascending
/// distance, ties to the lowest index.
inline std::vector<std::vector<std::size_t>> knn(const std::vector<Point3>& points,
                                                 const std::vector<Point3>& queries, std::size_t k) {
    const std::size_t n = points.size();
    if (k > n) throw ArgumentError("knn: k=" + std::to_string(k) + " exceeds point count " + std::to_string(n));
    std::vector<std::vector<std::size_t>> out;
    out.reserve(queries.size());
    std::vector<std::pair<double, std::size_t>> scratch(n);
    for (const auto& q : queries) {
        for (std::size_t i = 0; i < n; ++i) scratch[i] = {squared_distance(points[i], q), i};
        std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
        std::vector<std::size_t> row(k);
        for (std::size_t j = 0; j < k; ++j) row[j] = scratch[j].second;
        out.push_back(std::move(row));
    }
    return out;
}

/// g local patches of k points each, expressed relative to their FPS centers.
struct PatchSet {
    std::vector<std::size_t> center_indices;              // into the source cloud
    std::vector<std::vector<std::size_t>> member_indices;  // g rows of k source indices
    std::vector<Point3> centers;
    Tensor<double> patches;  // (g, k, 3), center-subtracted

    std::size_t groups() const { return centers.size(); }
    std::size_t group_size() const { return member_indices.empty() ? 0 : member_indices.front().size(); }

    template <typename T>
    Tensor<T> centers_tensor() const {
        Tensor<T> out({centers.size(), 3});
        for (std::size_t i = 0; i < centers.size(); ++i)
            for (int d = 0; d < 3; ++d) out.at(i, d) = static_cast<T>(centers[i][d]);
        return out;
    }

    template <typename T>
    Tensor<T> patches_tensor() const {
        return patches.cast<T>();
    }
};

/// Patches may overlap: a source point can belong to several patches.
inline PatchSet build_patches(const PointCloud& cloud, std::size_t g, std::size_t k, std::size_t start = 0) {
    if (g == 0 || k == 0) throw ArgumentError("build_patches: g and k must be positive");
    PatchSet ps;
    ps.center_indices = farthest_point_sample(cloud.points, g, start);
    for (auto i : ps.center_indices) ps.centers.push_back(cloud.points[i]);
    ps.member_indices = knn(cloud.points, ps.centers, k);
    ps.patches = Tensor<double>({g, k, 3});
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto& p = cloud.points[ps.member_indices[i][j]];
            for (std::size_t d = 0; d < 3; ++d) ps.patches[(i * k + j) * 3 + d] = p[d] - ps.centers[i][d];
        }
    }
    return ps;
}

struct MaskSet {
    std::vector<std::size_t> indices;  // ascending
    std::size_t seed_index = 0;
    std::size_t total = 0;  // g

    double ratio() const { return static_cast<double>(indices.size()) / static_cast<double>(total); }

    bool contains(std::size_t i) const { return std::binary_search(indices.begin(), indices.end(), i); }
};

struct MaskRange {
    double low = 0.25;
    double high = 0.45;
};

/// Admissible masked-patch counts for g patches: m/g inside the range and
/// 1 <= m < g.
inline std::pair<std::size_t, std::size_t> mask_count_bounds(std::size_t g, MaskRange range) {
    const double eps = 1e-9;
    const auto lo = static_cast<long>(std::ceil(range.low * static_cast<double>(g) - eps));
    const auto hi = static_cast<long>(std::floor(range.high * static_cast<double>(g) + eps));
    const long m_lo = std::max(lo, 1L);
    const long m_hi = std::min(hi, static_cast<long>(g) - 1);
    if (m_lo > m_hi) {
        throw ArgumentError("block_mask: " + std::to_string(g) + " patches cannot satisfy the mask ratio range");
    }
    return {static_cast<std::size_t>(m_lo), static_cast<std::size_t>(m_hi)};
}

/// Masks the round(ratio*g) patches whose centers are nearest the seed
/// patch's center, with the count clamped into the admissible range.
inline MaskSet block_mask_at(const std::vector<Point3>& centers, double ratio, std::size_t seed_index,
                             MaskRange range = {}) {
    const std::size_t g = centers.size();
    if (g < 4) throw ArgumentError("block_mask: need at least 4 patches, got " + std::to_string(g));
    if (seed_index >= g) throw ArgumentError("block_mask: seed index out of range");
    const auto [m_lo, m_hi] = mask_count_bounds(g, range);
    auto m = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(g)));
    m = std::clamp(m, m_lo, m_hi);
    MaskSet mask;
    mask.seed_index = seed_index;
    mask.total = g;
    mask.indices = knn(centers, {centers[seed_index]}, m).front();
    std::sort(mask.indices.begin(), mask.indices.end());
    return mask;
}

inline MaskSet block_mask(const std::vector<Point3>& centers, MaskRange range, Rng& rng) {
    if (!(range.low >= 0.0 && range.low <= range.high && range.high <= 1.0)) {
        throw ArgumentError("block_mask: invalid ratio range");
    }
    const double ratio = rng.uniform(range.low, range.high);
    const std::size_t seed = rng.index(std::max<std::size_t>(centers.size(), 1));
    return block_mask_at(centers, ratio, seed, range);
}

namespace detail {

// Nearest b-row for every a-row of two (n,3) blocks; ties to the lowest index.
template <typename T>
void nearest(const T* a, std::size_t n, const T* b, std::size_t m, std::size_t* idx, T* d2) {
    for (std::size_t i = 0; i < n; ++i) {
        T best = std::numeric_limits<T>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const T dx = a[i * 3] - b[j * 3], dy = a[i * 3 + 1] - b[j * 3 + 1], dz = a[i * 3 + 2] - b[j * 3 + 2];
            const T d = dx * dx + dy * dy + dz * dz;
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        idx[i] = arg;
        d2[i] = best;
    }
}

} // namespace detail

/// Chamfer distance: mean squared distance from each a-point to its nearest
/// b-point plus the same from b to a.
inline double chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b) {
    if (a.empty() || b.empty()) throw ArgumentError("chamfer: empty point set");
    std::vector<std::size_t> ia(a.size()), ib(b.size());
    std::vector<double> da(a.size()), db(b.size());
    detail::nearest(a.front().data(), a.size(), b.front().data(), b.size(), ia.data(), da.data());
    detail::nearest(b.front().data(), b.size(), a.front().data(), a.size(), ib.data(), db.data());
    double sa = 0, sb = 0;
    for (auto v : da) sa += v;
    for (auto v : db) sb += v;
    return sa / static_cast<double>(a.size()) + sb / static_cast<double>(b.size());
}

/// Differentiable Chamfer distance between matching sets of a batch:
/// a is (g, n, 3), b is (g, m, 3) (or (n,3)/(m,3) for a single pair).
/// Returns the g per-set distances.
template <typename T>
Var<T> chamfer_batched(const Var<T>& a, const Var<T>& b) {
    const auto& A = a.value();
    const auto& B = b.value();
    const bool single = A.rank() == 2;
    if ((A.rank() != 2 && A.rank() != 3) || A.rank() != B.rank() || A.shape().back() != 3 ||
        B.shape().back() != 3 || (!single && A.dim(0) != B.dim(0))) {
        throw ShapeError("chamfer: incompatible shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
    }
    const std::size_t g = single ? 1 : A.dim(0);
    const std::size_t n = single ? A.dim(0) : A.dim(1);
    const std::size_t m = single ? B.dim(0) : B.dim(1);
    std::vector<std::size_t> ia(g * n), ib(g * m);
    std::vector<T> da(g * n), db(g * m);
    Tensor<T> out({g});
    for (std::size_t s = 0; s < g; ++s) {
        detail::nearest(&A[s * n * 3], n, &B[s * m * 3], m, &ia[s * n], &da[s * n]);
        detail::nearest(&B[s * m * 3], m, &A[s * n * 3], n, &ib[s * m], &db[s * m]);
        T sa = 0, sb = 0;
        for (std::size_t i = 0; i < n; ++i) sa += da[s * n + i];
        for (std::size_t j = 0; j < m; ++j) sb += db[s * m + j];
        out[s] = sa / T(n) + sb / T(m);
    }
    return make_op<T>(
        "chamfer", std::move(out), {a, b},
        [g, n, m, ia = std::move(ia), ib = std::move(ib)](const Node<T>& self, const Tensor<T>& grad, auto pg) {
            const auto& A = self.parents[0]->value;
            const auto& B = self.parents[1]->value;
            for (std::size_t s = 0; s < g; ++s) {
                const T wa = T(2) * grad[s] / T(n);
                const T wb = T(2) * grad[s] / T(m);
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t j = ia[s * n + i];
                    for (std::size_t d = 0; d < 3; ++d) {
                        const T diff = A[(s * n + i) * 3 + d] - B[(s * m + j) * 3 + d];
                        if (pg[0]) (*pg[0])[(s * n + i) * 3 + d] += wa * diff;
                        if (pg[1]) (*pg[1])[(s * m + j) * 3 + d] -= wa * diff;
                    }
                }
                for (std::size_t j = 0; j < m; ++j) {
                    const std::size_t i = ib[s * m + j];
                    for (std::size_t d = 0; d < 3; ++d) {
                        const T diff = B[(s * m + j) * 3 + d] - A[(s * n + i) * 3 + d];
                        if (pg[1]) (*pg[1])[(s * m + j) * 3 + d] += wb * diff;
                        if (pg[0]) (*pg[0])[(s * n + i) * 3 + d] -= wb * diff;
                    }
                }
            }
        });
}

} // namespace pointmpm
