#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pointmpm/numerics.hpp"
#include "pointmpm/random.hpp"

using namespace pointmpm;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

// Reduces an arbitrary-shaped output to a scalar with fixed random weights so
// every output element contributes a distinct sensitivity.
Var<double> weighted_sum(const Var<double>& y, std::uint64_t seed) {
    Rng rng(seed);
    return sum_all(mul(y, constant(random_tensor(y.shape(), rng))));
}

} // namespace

TEST(Evaluate, SoftmaxOfEqualEntriesIsUniform) {
    Bindings<double> b{{"x", Tensor<double>({2}, {0.0, 0.0})}};
    auto y = evaluate<double>([](Scope<double>& s) { return softmax(s.leaf("x")); }, b);
    EXPECT_DOUBLE_EQ(y[0], 0.5);
    EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Evaluate, L2NormalizeThreeFour) {
    Bindings<double> b{{"x", Tensor<double>({2}, {3.0, 4.0})}};
    auto y = evaluate<double>([](Scope<double>& s) { return l2_normalize(s.leaf("x")); }, b);
    EXPECT_NEAR(y[0], 0.6, 1e-15);
    EXPECT_NEAR(y[1], 0.8, 1e-15);
}

TEST(Evaluate, IdentityMatmul) {
    Rng rng(3);
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Bindings<double> b{{"I", eye}, {"X", random_tensor({3, 3}, rng)}};
    auto y = evaluate<double>([](Scope<double>& s) { return matmul(s.leaf("I"), s.leaf("X")); }, b);
    EXPECT_EQ(y, b.at("X"));
}

TEST(Evaluate, Errors) {
    Bindings<double> b{{"x", Tensor<double>({2, 3})}, {"y", Tensor<double>({2, 3})}};
    EXPECT_THROW(evaluate<double>([](Scope<double>& s) { return s.leaf("missing"); }, b), BindingError);
    EXPECT_THROW(evaluate<double>([](Scope<double>& s) { return matmul(s.leaf("x"), s.leaf("y")); }, b),
                 ShapeError);
    EXPECT_THROW(evaluate<double>([](Scope<double>& s) { return log(s.leaf("x")); }, b), NonFiniteError);
}

TEST(Evaluate, DeterministicBitwise) {
    Rng rng(11);
    Bindings<double> b{{"a", random_tensor({5, 7}, rng)}, {"b", random_tensor({7, 4}, rng)}};
    Expression<double> e = [](Scope<double>& s) {
        return layer_norm(gelu(matmul(s.leaf("a"), s.leaf("b"))));
    };
    EXPECT_EQ(evaluate(e, b), evaluate(e, b));
}

TEST(Gradient, SquareAtThree) {
    Bindings<double> b{{"x", Tensor<double>::scalar(3.0)}};
    auto g = gradient<double>([](Scope<double>& s) { return mul(s.leaf("x"), s.leaf("x")); }, b, {"x"});
    EXPECT_DOUBLE_EQ(g.at("x")[0], 6.0);
}

TEST(Gradient, SoftmaxJacobianRow) {
    // d softmax(x)_0 / dx = [y0(1-y0), -y0*y1] = [0.25, -0.25] at x = [0, 0].
    Bindings<double> b{{"x", Tensor<double>({2}, {0.0, 0.0})}};
    auto g = gradient<double>([](Scope<double>& s) { return gather(softmax(s.leaf("x")), {0}); }, b, {"x"});
    EXPECT_NEAR(g.at("x")[0], 0.25, 1e-15);
    EXPECT_NEAR(g.at("x")[1], -0.25, 1e-15);
}

TEST(Gradient, ConstantHasZeroGradient) {
    Bindings<double> b{{"x", Tensor<double>({3}, {1.0, 2.0, 3.0})}};
    auto g = gradient<double>([](Scope<double>&) { return constant(Tensor<double>::scalar(4.0)); }, b, {"x"});
    EXPECT_EQ(g.at("x"), Tensor<double>({3}));
}

TEST(Gradient, RejectsNonScalarRoot) {
    Bindings<double> b{{"x", Tensor<double>({3}, {1.0, 2.0, 3.0})}};
    EXPECT_THROW(gradient<double>([](Scope<double>& s) { return s.leaf("x"); }, b, {"x"}), ShapeError);
    EXPECT_THROW(gradient<double>([](Scope<double>& s) { return sum_all(s.leaf("x")); }, b, {"nope"}),
                 BindingError);
}

TEST(GradCheck, QuadraticForm) {
    Rng rng(5);
    Bindings<double> b{{"A", random_tensor({4, 4}, rng)}, {"x", random_tensor({4, 1}, rng)}};
    Expression<double> e = [](Scope<double>& s) {
        auto x = s.leaf("x");
        return sum_all(matmul(transpose(x), matmul(s.leaf("A"), x)));
    };
    EXPECT_LT(grad_check(e, b, 1e-5), 1e-7);
}

TEST(GradCheck, LayerNormComposite) {
    Rng rng(6);
    Bindings<double> b{{"x", random_tensor({4, 6}, rng)},
                       {"gain", random_tensor({6}, rng)},
                       {"bias", random_tensor({6}, rng)}};
    Expression<double> e = [](Scope<double>& s) {
        auto y = add(mul(layer_norm(s.leaf("x")), s.leaf("gain")), s.leaf("bias"));
        return weighted_sum(y, 17);
    };
    EXPECT_LT(grad_check(e, b, 1e-5), 1e-5);
}

class PrimitiveGradCheck : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradCheck, EveryPrimitive) {
    Rng rng(100 + GetParam());
    Bindings<double> b{{"a", random_tensor({3, 4}, rng)},
                       {"b", random_tensor({3, 4}, rng)},
                       {"row", random_tensor({4}, rng)},
                       {"s", random_tensor({1}, rng)},
                       {"m", random_tensor({4, 5}, rng)},
                       {"p", Tensor<double>({3, 4})}};
    // Strictly positive input for log.
    for (std::size_t i = 0; i < 12; ++i) b.at("p")[i] = 0.5 + rng.uniform();

    using Op = std::function<Var<double>(Scope<double>&)>;
    const std::vector<std::pair<const char*, Op>> ops = {
        {"matmul", [](auto& s) { return matmul(s.leaf("a"), s.leaf("m")); }},
        {"add", [](auto& s) { return add(s.leaf("a"), s.leaf("b")); }},
        {"add_row", [](auto& s) { return add(s.leaf("a"), s.leaf("row")); }},
        {"sub", [](auto& s) { return sub(s.leaf("a"), s.leaf("b")); }},
        {"mul", [](auto& s) { return mul(s.leaf("a"), s.leaf("b")); }},
        {"mul_scalar", [](auto& s) { return mul(s.leaf("a"), s.leaf("s")); }},
        {"exp", [](auto& s) { return exp(s.leaf("a")); }},
        {"log", [](auto& s) { return log(s.leaf("p")); }},
        {"relu", [](auto& s) { return relu(s.leaf("a")); }},
        {"gelu", [](auto& s) { return gelu(s.leaf("a")); }},
        {"softmax0", [](auto& s) { return softmax(s.leaf("a"), 0); }},
        {"softmax1", [](auto& s) { return softmax(s.leaf("a"), 1); }},
        {"log_softmax", [](auto& s) { return log_softmax(s.leaf("a"), 1); }},
        {"layer_norm", [](auto& s) { return layer_norm(s.leaf("a")); }},
        {"max0", [](auto& s) { return max(s.leaf("a"), 0); }},
        {"max1", [](auto& s) { return max(s.leaf("a"), 1); }},
        {"mean0", [](auto& s) { return mean(s.leaf("a"), 0); }},
        {"mean1", [](auto& s) { return mean(s.leaf("a"), 1); }},
        {"concat0", [](auto& s) { return concat<double>({s.leaf("a"), s.leaf("b")}, 0); }},
        {"concat1", [](auto& s) { return concat<double>({s.leaf("a"), s.leaf("b")}, 1); }},
        {"gather", [](auto& s) { return gather(s.leaf("a"), {2, 0, 2}); }},
        {"l2_normalize", [](auto& s) { return l2_normalize(s.leaf("a"), 1); }},
        {"l2_normalize0", [](auto& s) { return l2_normalize(s.leaf("a"), 0); }},
        {"broadcast", [](auto& s) { return broadcast_to(s.leaf("s"), {3, 4}); }},
        {"transpose", [](auto& s) { return transpose(s.leaf("a")); }},
        {"slice", [](auto& s) { return slice_last(s.leaf("a"), 1, 3); }},
        {"reshape", [](auto& s) { return reshape(s.leaf("a"), {2, 6}); }},
    };
    for (const auto& [name, op] : ops) {
        Expression<double> e = [&op](Scope<double>& s) { return weighted_sum(op(s), 99); };
        EXPECT_LT(grad_check(e, b, 1e-5), 1e-5) << name;
    }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, PrimitiveGradCheck, ::testing::Range(0, 5));

TEST(Properties, SoftmaxAndNormalizeInvariants) {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        auto x = leaf(random_tensor({6, 9}, rng, 5.0));
        auto y = softmax(x, 1).value();
        auto z = l2_normalize(x, 1).value();
        for (std::size_t r = 0; r < 6; ++r) {
            double s = 0, n = 0;
            for (std::size_t c = 0; c < 9; ++c) {
                EXPECT_GE(y.at(r, c), 0.0);
                s += y.at(r, c);
                n += z.at(r, c) * z.at(r, c);
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
            EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
        }
    }
}

TEST(StraightThrough, ForwardOneHotBackwardIdentity) {
    Bindings<double> b{{"x", Tensor<double>({2, 3}, {0.1, 0.7, 0.2, 0.5, 0.5, 0.0})}};
    auto y = evaluate<double>([](Scope<double>& s) { return straight_through_onehot(s.leaf("x")); }, b);
    EXPECT_EQ(y, Tensor<double>({2, 3}, {0, 1, 0, 1, 0, 0}));
    auto g = gradient<double>([](Scope<double>& s) { return weighted_sum(straight_through_onehot(s.leaf("x")), 4); },
                              b, {"x"});
    Rng rng(4);
    auto w = random_tensor({2, 3}, rng);
    EXPECT_EQ(g.at("x"), w);
}

TEST(Detach, BlocksGradient) {
    Bindings<double> b{{"x", Tensor<double>({3}, {1.0, 2.0, 3.0})}};
    auto g = gradient<double>(
        [](Scope<double>& s) { return sum_all(mul(detach(s.leaf("x")), s.leaf("x"))); }, b, {"x"});
    EXPECT_EQ(g.at("x"), b.at("x"));
}
