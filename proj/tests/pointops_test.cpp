#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "pointmpm/pointops.hpp"
#include "test_oracles.hpp"

using namespace pointmpm;
using namespace pointmpm::testing;

TEST(FarthestPointSample, LineEndpoints) {
    std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    EXPECT_EQ(farthest_point_sample(pts, 2, 0), (std::vector<std::size_t>{0, 3}));
}

TEST(FarthestPointSample, AllPointsInFpsOrder) {
    std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    EXPECT_EQ(farthest_point_sample(pts, 4, 0), (std::vector<std::size_t>{0, 3, 1, 2}));
}

TEST(FarthestPointSample, CubeCorners) {
    std::vector<Point3> corners;
    for (int i = 0; i < 8; ++i) corners.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
    const auto picks = farthest_point_sample(corners, 4, 0);
    EXPECT_EQ(picks, brute_force_fps(corners, 4, 0));
    // Opposite corner first, then every remaining corner ties at distance 1.
    EXPECT_EQ(picks, (std::vector<std::size_t>{0, 7, 1, 2}));
}

TEST(FarthestPointSample, Errors) {
    std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}};
    EXPECT_THROW(farthest_point_sample(pts, 3, 0), ArgumentError);
    EXPECT_THROW(farthest_point_sample(pts, 1, 2), ArgumentError);
}

TEST(FarthestPointSample, RadiiNonIncreasing) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        auto pts = random_points(64, rng);
        auto picks = farthest_point_sample(pts, 32, 0);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < picks.size(); ++i) {
            double r = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < i; ++j) r = std::min(r, squared_distance(pts[picks[i]], pts[picks[j]]));
            EXPECT_LE(r, prev);
            prev = r;
        }
    }
}

TEST(FarthestPointSample, PermutationCovariant) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        auto pts = random_points(40, rng);
        std::vector<std::size_t> perm(pts.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm.begin(), perm.end());
        // permuted[perm[i]] = pts[i]
        std::vector<Point3> permuted(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) permuted[perm[i]] = pts[i];
        auto a = farthest_point_sample(pts, 12, 5);
        auto b = farthest_point_sample(permuted, 12, perm[5]);
        for (auto& i : a) i = perm[i];
        EXPECT_EQ(a, b);
    }
}

TEST(Knn, SelfIsNearest) {
    Rng rng(3);
    auto pts = random_points(20, rng);
    auto res = knn(pts, {pts[7]}, 1);
    EXPECT_EQ(res[0], std::vector<std::size_t>{7});
}

TEST(Knn, CollinearFromEnd) {
    std::vector<Point3> pts{{3, 0, 0}, {0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    EXPECT_EQ(knn(pts, {{0, 0, 0}}, 2)[0], (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(knn(pts, {{0, 0, 0}}, 4)[0], (std::vector<std::size_t>{1, 2, 3, 0}));
}

TEST(Knn, TiesToLowerIndex) {
    std::vector<Point3> pts{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, 0, 0}};
    EXPECT_EQ(knn(pts, {{0, 0, 0}}, 3)[0], (std::vector<std::size_t>{3, 0, 1}));
}

TEST(Knn, MatchesBruteForce) {
    Rng rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        auto pts = random_points(1 + rng.index(64), rng);
        auto queries = random_points(5, rng);
        const std::size_t k = 1 + rng.index(pts.size());
        EXPECT_EQ(knn(pts, queries, k), brute_force_knn(pts, queries, k));
    }
    EXPECT_THROW(knn(random_points(3, rng), {{0, 0, 0}}, 4), ArgumentError);
}

TEST(BuildPatches, ReconstructsSourcePoints) {
    Rng rng(5);
    PointCloud cloud{random_points(100, rng), -1};
    auto ps = build_patches(cloud, 8, 12);
    ASSERT_EQ(ps.patches.shape(), (Shape{8, 12, 3}));
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(ps.centers[i], cloud.points[ps.center_indices[i]]);
        for (std::size_t j = 0; j < 12; ++j) {
            const auto& src = cloud.points[ps.member_indices[i][j]];
            for (std::size_t d = 0; d < 3; ++d) {
                EXPECT_NEAR(ps.patches[(i * 12 + j) * 3 + d] + ps.centers[i][d], src[d], 1e-15);
            }
        }
    }
}

TEST(BuildPatches, SinglePointPatchesAreZero) {
    Rng rng(6);
    PointCloud cloud{random_points(10, rng), -1};
    auto ps = build_patches(cloud, 10, 1);
    for (std::size_t i = 0; i < ps.patches.size(); ++i) EXPECT_EQ(ps.patches[i], 0.0);
}

TEST(BuildPatches, DeskConfigMatchesOracleComposition) {
    Rng rng(7);
    PointCloud cloud = normalize_cloud({random_points(256, rng), 2});
    auto ps = build_patches(cloud, 16, 16);
    EXPECT_EQ(ps.patches.shape(), (Shape{16, 16, 3}));
    auto centers = brute_force_fps(cloud.points, 16, 0);
    EXPECT_EQ(ps.center_indices, centers);
    std::vector<Point3> cpts;
    for (auto c : centers) cpts.push_back(cloud.points[c]);
    EXPECT_EQ(ps.member_indices, brute_force_knn(cloud.points, cpts, 16));
}

TEST(NormalizeCloud, CentroidAndUnitRadius) {
    Rng rng(8);
    auto pts = random_points(50, rng);
    for (auto& p : pts) {
        p[0] = 3 * p[0] + 10;
        p[2] -= 4;
    }
    auto c = normalize_cloud({pts, -1});
    Point3 mean{0, 0, 0};
    double r = 0;
    for (const auto& p : c.points) {
        for (int d = 0; d < 3; ++d) mean[d] += p[d] / 50.0;
        r = std::max(r, std::sqrt(squared_distance(p, {0, 0, 0})));
    }
    for (double v : mean) EXPECT_NEAR(v, 0.0, 1e-5);
    EXPECT_NEAR(r, 1.0, 1e-5);
    EXPECT_THROW(normalize_cloud({}), ArgumentError);
}

TEST(BlockMask, QuarterRatioIsSeedNeighborhood) {
    Rng rng(9);
    auto centers = random_points(16, rng);
    auto mask = block_mask_at(centers, 0.25, 3);
    ASSERT_EQ(mask.indices.size(), 4u);
    auto nn = knn(centers, {centers[3]}, 4)[0];
    std::sort(nn.begin(), nn.end());
    EXPECT_EQ(mask.indices, nn);
    EXPECT_TRUE(mask.contains(3));
}

TEST(BlockMask, InvariantsAndDeterminism) {
    Rng gen(10);
    auto centers = random_points(16, gen);
    Rng a(77), b(77);
    for (int i = 0; i < 500; ++i) {
        auto ma = block_mask(centers, {}, a);
        auto mb = block_mask(centers, {}, b);
        EXPECT_EQ(ma.indices, mb.indices);
        EXPECT_GE(ma.ratio(), 0.25);
        EXPECT_LE(ma.ratio(), 0.45);
        EXPECT_EQ(ma.indices, brute_force_block(centers, ma.indices.size(), ma.seed_index));
    }
}

TEST(BlockMask, TooFewPatches) {
    Rng rng(11);
    EXPECT_THROW(block_mask(random_points(3, rng), {}, rng), ArgumentError);
    // 5 patches: 0.25*5 = 1.25 -> at least 2, 0.45*5 = 2.25 -> at most 2.
    auto m = block_mask_at(random_points(5, rng), 0.45, 0);
    EXPECT_EQ(m.indices.size(), 2u);
    EXPECT_NO_THROW(block_mask_at(random_points(6, rng), 0.3, 0));
    EXPECT_THROW(block_mask_at(random_points(7, rng), 0.3, 0, {0.40, 0.42}), ArgumentError);
}

TEST(Chamfer, Examples) {
    Rng rng(12);
    auto a = random_points(5, rng);
    EXPECT_EQ(chamfer(a, a), 0.0);
    EXPECT_DOUBLE_EQ(chamfer({{0, 0, 0}}, {{1, 0, 0}}), 2.0);
    EXPECT_THROW(chamfer({}, a), ArgumentError);
}

TEST(Chamfer, MatchesDoubleLoopOracleAndIsSymmetric) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        auto a = random_points(1 + rng.index(10), rng);
        auto b = random_points(1 + rng.index(10), rng);
        EXPECT_NEAR(chamfer(a, b), brute_force_chamfer(a, b), 1e-12);
        EXPECT_EQ(chamfer(a, b), chamfer(b, a));
        EXPECT_GE(chamfer(a, b), 0.0);
    }
}

TEST(Chamfer, BatchedValueAndGradient) {
    Rng rng(14);
    Bindings<double> b{{"a", Tensor<double>({3, 5, 3})}, {"b", Tensor<double>({3, 4, 3})}};
    for (auto& [name, t] : b)
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    auto per = evaluate<double>([](Scope<double>& s) { return chamfer_batched(s.leaf("a"), s.leaf("b")); }, b);
    for (std::size_t s = 0; s < 3; ++s) {
        std::vector<Point3> pa, pb;
        for (std::size_t i = 0; i < 5; ++i) pa.push_back({b["a"][(s * 5 + i) * 3], b["a"][(s * 5 + i) * 3 + 1], b["a"][(s * 5 + i) * 3 + 2]});
        for (std::size_t i = 0; i < 4; ++i) pb.push_back({b["b"][(s * 4 + i) * 3], b["b"][(s * 4 + i) * 3 + 1], b["b"][(s * 4 + i) * 3 + 2]});
        EXPECT_NEAR(per[s], brute_force_chamfer(pa, pb), 1e-12);
    }
    Expression<double> e = [](Scope<double>& s) {
        auto c = chamfer_batched(s.leaf("a"), s.leaf("b"));
        return sum_all(mul(c, constant(Tensor<double>({3}, {0.7, -1.3, 2.1}))));
    };
    EXPECT_LT(grad_check(e, b), 1e-6);
}
