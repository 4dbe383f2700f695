#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "pointmpm/targets.hpp"

using namespace pointmpm;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

Tensor<double> unit_rows(std::size_t g, std::size_t d, Rng& rng) {
    return l2_normalize(constant(random_tensor({g, d}, rng)), -1).value();
}

std::size_t argmax_row(const Tensor<double>& t, std::size_t r) {
    auto row = t.row(r);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

} // namespace

TEST(Soften, Examples) {
    auto p = soften(Tensor<double>({1, 4}, 2.5), 0.05);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(p[j], 0.25);
    auto q = soften(Tensor<double>({1, 2}, {std::log(2.0), 0.0}), 1.0);
    EXPECT_NEAR(q[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(q[1], 1.0 / 3.0, 1e-12);
    EXPECT_THROW(soften(q, 0.0), ArgumentError);
    EXPECT_THROW(soften(q, -1.0), ArgumentError);
}

TEST(Soften, SharpensTowardOneHotAsTemperatureFalls) {
    Tensor<double> z({1, 3}, {1.0, 0.5, -0.2});
    double prev = 0;
    for (double tau : {5.0, 0.5, 0.05, 0.005}) {
        const double top = soften(z, tau)[0];
        EXPECT_GT(top, prev);
        prev = top;
    }
    EXPECT_NEAR(prev, 1.0, 1e-12);
}

TEST(Soften, RowsAreDistributionsAndKeepArgmax) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        auto z = random_tensor({4, 16}, rng, 3.0);
        for (double tau : {0.005, 0.05, 0.5, 5.0}) {
            auto p = soften(z, tau);
            for (std::size_t r = 0; r < 4; ++r) {
                double sum = 0;
                for (auto v : p.row(r)) {
                    EXPECT_GE(v, 0.0);
                    sum += v;
                }
                EXPECT_NEAR(sum, 1.0, 1e-9);
                EXPECT_EQ(argmax_row(p, r), argmax_row(z, r));
            }
        }
    }
}

TEST(Similarity, Examples) {
    Tensor<double> same({3, 2});
    for (std::size_t i = 0; i < 3; ++i) same.at(i, 0) = 1.0;
    auto w = similarity(same);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(w[i], 1.0 / 3.0, 1e-15);

    auto ortho = similarity(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    const double e = std::exp(1.0);
    EXPECT_NEAR(ortho.at(0, 0), e / (e + 1), 1e-12);
    EXPECT_NEAR(ortho.at(0, 1), 1 / (e + 1), 1e-12);
    EXPECT_NEAR(ortho.at(1, 1), 0.7310585786300049, 1e-12);

    EXPECT_THROW(similarity(Tensor<double>({2, 2}, {2, 0, 0, 1})), ArgumentError);
}

TEST(Similarity, RowStochasticWithDominantDiagonal) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        auto w = similarity(unit_rows(8, 5, rng));
        for (std::size_t i = 0; i < 8; ++i) {
            double sum = 0;
            for (std::size_t k = 0; k < 8; ++k) {
                sum += w.at(i, k);
                EXPECT_LE(w.at(i, k), w.at(i, i));
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(MixTargets, DegenerateOmegas) {
    Rng rng(3);
    auto p = soften(random_tensor({6, 5}, rng), 0.5);
    auto w = similarity(unit_rows(6, 4, rng));
    EXPECT_EQ(mix_targets(p, w, 1.0), p);

    auto wp = matmul(constant(w), constant(p)).value();
    auto zero = mix_targets(p, w, 0.0);
    for (std::size_t i = 0; i < wp.size(); ++i) EXPECT_NEAR(zero[i], wp[i], 1e-15);

    EXPECT_THROW(mix_targets(p, w, 1.5), ArgumentError);
    EXPECT_THROW(mix_targets(p, w, -0.1), ArgumentError);
    EXPECT_THROW(mix_targets(p, Tensor<double>({5, 5}), 0.5), ShapeError);
}

TEST(MixTargets, UniformSimilarityBlendsWithMeanRow) {
    Rng rng(4);
    const std::size_t g = 4, v = 3;
    auto p = soften(random_tensor({g, v}, rng), 1.0);
    Tensor<double> w({g, g}, 1.0 / g);
    const double omega = 0.3;
    auto out = mix_targets(p, w, omega);
    for (std::size_t j = 0; j < v; ++j) {
        double mean = 0;
        for (std::size_t k = 0; k < g; ++k) mean += p.at(k, j) / g;
        for (std::size_t i = 0; i < g; ++i) EXPECT_NEAR(out.at(i, j), omega * p.at(i, j) + (1 - omega) * mean, 1e-12);
    }
}

TEST(MixTargets, RowsAreDistributions) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = soften(random_tensor({8, 10}, rng, 2.0), 0.05);
        auto w = similarity(unit_rows(8, 6, rng));
        auto out = mix_targets(p, w, rng.uniform());
        for (std::size_t i = 0; i < 8; ++i) {
            double sum = 0;
            for (auto x : out.row(i)) {
                EXPECT_GE(x, 0.0);
                sum += x;
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(OmegaSchedule, WarmupDecayAndFloor) {
    OmegaSchedule s;
    EXPECT_EQ(omega_at(0, s), 1.0);
    EXPECT_EQ(omega_at(29, s), 1.0);
    EXPECT_EQ(omega_at(30, s), 1.0);
    EXPECT_NEAR(omega_at(165, s), 0.9, 1e-9);
    EXPECT_NEAR(omega_at(300, s), 0.8, 1e-9);
    double prev = 1.0;
    for (std::size_t e = 0; e <= 300; ++e) {
        const double w = omega_at(e, s);
        EXPECT_LE(w, prev);
        EXPECT_GE(w, 0.8 - 1e-12);
        prev = w;
    }
    EXPECT_THROW(omega_at(301, s), ArgumentError);
}

TEST(OmegaSchedule, WarmupOffAndValidation) {
    OmegaSchedule off;
    off.warmup = false;
    EXPECT_EQ(omega_at(0, off), 0.8);
    EXPECT_EQ(omega_at(100, off), 0.8);

    OmegaSchedule bad;
    bad.floor = 1.2;
    EXPECT_THROW(bad.validate(), ConfigError);
    OmegaSchedule short_run;
    short_run.total_epochs = 20;
    EXPECT_THROW(short_run.validate(), ConfigError);
}

TEST(MpmLoss, OneHotTargetsGiveCrossEntropy) {
    Rng rng(6);
    auto logits = random_tensor({5, 4}, rng);
    auto targets = Tensor<double>({5, 4});
    const std::vector<std::size_t> labels{2, 0, 3, 3, 1};
    for (std::size_t i = 0; i < 5; ++i) targets.at(i, labels[i]) = 1.0;
    MaskSet mask{{0, 2, 3}, 2, 5};
    const double loss = mpm_loss(constant(logits), targets, mask).value()[0];
    auto logp = log_softmax(constant(logits), -1).value();
    double ce = 0;
    for (auto i : mask.indices) ce -= logp.at(i, labels[i]) / 3.0;
    EXPECT_NEAR(loss, ce, 1e-12);
}

TEST(MpmLoss, UniformPredictionGivesLogVocab) {
    auto targets = soften(Tensor<double>({3, 6}, {1, 2, 3, 4, 5, 6, 0, 0, 0, 0, 0, 9, 1, 1, 1, 1, 1, 1}), 1.0);
    MaskSet mask{{0, 1, 2}, 0, 3};
    EXPECT_NEAR(mpm_loss(constant(Tensor<double>({3, 6}, 0.7)), targets, mask).value()[0], std::log(6.0), 1e-12);
    EXPECT_THROW(mpm_loss(constant(Tensor<double>({3, 6})), targets, MaskSet{{}, 0, 3}), ArgumentError);
    EXPECT_THROW(mpm_loss(constant(Tensor<double>({3, 5})), targets, mask), ShapeError);
}

TEST(MpmLoss, MinimizedByMatchingPrediction) {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto zt = random_tensor({4, 5}, rng);
        auto targets = soften(zt, 1.0);
        MaskSet mask{{0, 1, 2, 3}, 0, 4};
        const double best = mpm_loss(constant(zt), targets, mask).value()[0];
        for (int k = 0; k < 10; ++k) {
            EXPECT_GE(mpm_loss(constant(random_tensor({4, 5}, rng)), targets, mask).value()[0], best);
        }
    }
}

TEST(PredictionHead, ShapeSymmetryAndGradient) {
    Rng rng(8);
    Bindings<double> b;
    init_prediction_head(b, 6, 5, rng);
    Tensor<double> same({3, 6});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 6; ++j) same.at(i, j) = 0.1 * double(j);
    Scope<double> s(b);
    auto out = prediction_head(s, constant(same)).value();
    ASSERT_EQ(out.shape(), (Shape{3, 5}));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out.at(2, j), out.at(0, j));
    EXPECT_THROW(prediction_head(s, constant(Tensor<double>({3, 4}))), ShapeError);

    b["h"] = random_tensor({3, 6}, rng);
    auto targets = soften(random_tensor({3, 5}, rng), 0.5);
    Expression<double> e = [&](Scope<double>& sc) {
        return mpm_loss(prediction_head(sc, sc.leaf("h")), targets, MaskSet{{0, 2}, 0, 3});
    };
    EXPECT_LT(grad_check(e, b), 1e-4);
}

TEST(MultiChoiceTargets, MatchesTensorPathAndCarriesNoGradient) {
    Rng rng(9);
    Bindings<double> b{{"z", random_tensor({6, 5}, rng)}, {"h", unit_rows(6, 4, rng)}, {"pred", random_tensor({6, 5}, rng)}};
    const MaskSet mask{{1, 3, 4}, 3, 6};
    auto expect = mix_targets(soften(b["z"], 0.05), similarity(b["h"]), 0.6);
    auto got = evaluate<double>([](Scope<double>& s) { return multi_choice_targets(s.leaf("z"), s.leaf("h"), 0.05, 0.6); }, b);
    EXPECT_LT(max_abs_diff(got, expect), 1e-12);

    Expression<double> e = [&](Scope<double>& s) {
        auto t = multi_choice_targets(s.leaf("z"), s.leaf("h"), 0.05, 0.6);
        auto pred = add(s.leaf("pred"), add(s.leaf("z"), t));
        return mpm_loss(pred, t.value(), mask);
    };
    auto g = gradient(e, b, {"z", "h", "pred"});
    for (auto v : g.at("h").data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(g.at("z"), g.at("pred"));
}
