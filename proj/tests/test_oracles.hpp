#pragma once

// Independent brute-force references used only by tests.

#include <algorithm>
#include <limits>
#include <vector>

#include "pointmpm/pointops.hpp"

namespace pointmpm::testing {

inline std::vector<Point3> random_points(std::size_t n, Rng& rng) {
    std::vector<Point3> pts(n);
    for (auto& p : pts)
        for (auto& v : p) v = rng.uniform(-1.0, 1.0);
    return pts;
}

/// Recomputes every candidate's distance to the full pick set at each step.
inline std::vector<std::size_t> brute_force_fps(const std::vector<Point3>& pts, std::size_t count,
                                                std::size_t start) {
    std::vector<std::size_t> picks{start};
    while (picks.size() < count) {
        double best = -1;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (std::find(picks.begin(), picks.end(), i) != picks.end()) continue;
            double d = std::numeric_limits<double>::infinity();
            for (auto p : picks) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (pts[i][k] - pts[p][k]) * (pts[i][k] - pts[p][k]);
                d = std::min(d, s);
            }
            if (d > best) {
                best = d;
                arg = i;
            }
        }
        picks.push_back(arg);
    }
    return picks;
}

/// Full stable sort of all points by distance.
inline std::vector<std::vector<std::size_t>> brute_force_knn(const std::vector<Point3>& pts,
                                                             const std::vector<Point3>& queries, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& q : queries) {
        std::vector<std::size_t> idx(pts.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        auto dist = [&](std::size_t i) {
            double s = 0;
            for (int d = 0; d < 3; ++d) s += (pts[i][d] - q[d]) * (pts[i][d] - q[d]);
            return s;
        };
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return dist(a) < dist(b); });
        idx.resize(k);
        out.push_back(idx);
    }
    return out;
}

inline std::vector<std::size_t> brute_force_block(const std::vector<Point3>& centers, std::size_t m,
                                                  std::size_t seed) {
    auto nn = brute_force_knn(centers, {centers[seed]}, m)[0];
    std::sort(nn.begin(), nn.end());
    return nn;
}

inline double brute_force_chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b) {
    auto directed = [](const std::vector<Point3>& x, const std::vector<Point3>& y) {
        double total = 0;
        for (const auto& p : x) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : y) {
                double s = 0;
                for (int d = 0; d < 3; ++d) s += (p[d] - q[d]) * (p[d] - q[d]);
                best = std::min(best, s);
            }
            total += best;
        }
        return total / static_cast<double>(x.size());
    };
    return directed(a, b) + directed(b, a);
}

} // namespace pointmpm::testing
