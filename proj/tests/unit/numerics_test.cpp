#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "ape/numerics.hpp"
#include "test_support.hpp"

using ape::Field2D;

TEST(TotalVariation, ConstantFieldIsZero) {
    EXPECT_EQ(ape::total_variation(Field2D(7, 3, 0.42)), 0.0);
    EXPECT_EQ(ape::total_variation(Field2D(1, 1, 5.0)), 0.0);
}

TEST(TotalVariation, SinglePixelHasFourEdges) {
    Field2D f(5, 5, 0.0);
    f(2, 2) = 1.0;
    EXPECT_EQ(ape::total_variation(f), 4.0);
}

TEST(TotalVariation, Row) {
    EXPECT_EQ(ape::total_variation(Field2D(4, 1, {0, 1, 1, 0})), 2.0);
    EXPECT_EQ(ape::total_variation(Field2D(1, 4, {0, 1, 1, 0})), 2.0);
}

TEST(TotalVariation, SubgradientMatchesFiniteDifferencesAwayFromTies) {
    const Field2D f = ape::testing::random_field(6, 5, 11);
    const Field2D analytic = ape::total_variation_subgradient(f);
    const Field2D numeric = ape::finite_diff_gradient(
        [](const Field2D& g) { return ape::total_variation(g); }, f, 1e-7);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(analytic[i], numeric[i], 1e-6);
}

TEST(TotalVariation, SubgradientUsesZeroAtTies) {
    EXPECT_EQ(ape::total_variation_subgradient(Field2D(3, 3, 0.7)), Field2D(3, 3, 0.0));
}

TEST(L0, CountsExactNonzeros) {
    EXPECT_EQ(ape::l0(Field2D(4, 4, 0.0)), 0u);
    Field2D f(4, 4, 0.0);
    f[0] = 1e-300;
    f[5] = -2.0;
    f[15] = 0.5;
    EXPECT_EQ(ape::l0(f), 3u);
    const Field2D img = ape::testing::random_field(4, 4, 3);
    EXPECT_EQ(ape::l0(img - img), 0u);
}

TEST(Clip, Examples) {
    EXPECT_EQ(ape::clip(Field2D(3, 1, {-0.2, 0.5, 1.3}), 0.0, 1.0), Field2D(3, 1, {0.0, 0.5, 1.0}));
    const Field2D inside = ape::testing::random_field(3, 3, 5);
    EXPECT_EQ(ape::clip(inside, 0.0, 1.0), inside);
    EXPECT_EQ(ape::clip(Field2D(2, 2, 3.0), 0.0, 2.0), Field2D(2, 2, 2.0));
    EXPECT_THROW(ape::clip(inside, 1.0, 0.0), std::invalid_argument);
}

TEST(Adam, FirstStepWithUnitGradient) {
    ape::AdamHyper h;
    h.lr = 0.1;
    const auto state = ape::AdamState::zeros(Field2D(3, 2), h);
    const auto [next, target] = ape::adam_step(state, Field2D(3, 2, 1.0), Field2D(3, 2, 0.0));
    EXPECT_EQ(next.step, 1u);
    // 0.1 / (1 + 1e-8), evaluated to 25 digits.
    for (double v : target.values()) EXPECT_NEAR(v, -0.0999999990000000099999, 1e-15);
}

TEST(Adam, ZeroGradientLeavesTarget) {
    const Field2D start = ape::testing::random_field(4, 4, 9);
    const auto state = ape::AdamState::zeros(start, {});
    const auto [next, target] = ape::adam_step(state, Field2D(4, 4, 0.0), start);
    EXPECT_EQ(target, start);
}

TEST(Adam, TwoStepsMoveAgainstGradient) {
    ape::AdamHyper h;
    h.lr = 0.01;
    const Field2D g(2, 1, {0.3, -2.0});
    auto state = ape::AdamState::zeros(g, h);
    Field2D x(2, 1, 0.5);
    auto [s1, x1] = ape::adam_step(state, g, x);
    auto [s2, x2] = ape::adam_step(s1, g, x1);
    EXPECT_EQ(s2.step, 2u);
    EXPECT_LT(x1[0], x[0]);
    EXPECT_LT(x2[0], x1[0]);
    EXPECT_GT(x1[1], x[1]);
    EXPECT_GT(x2[1], x1[1]);
}

TEST(Adam, MatchesReferenceRecurrence) {
    ape::AdamHyper h;
    h.lr = 0.02;
    const double grads[] = {0.5, -1.0, 0.25, 4.0};
    double m = 0, v = 0, x = 0.3;
    auto state = ape::AdamState::zeros(Field2D(1, 1), h);
    Field2D xf(1, 1, 0.3);
    for (int t = 1; t <= 4; ++t) {
        const double g = grads[t - 1];
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t));
        const double vh = v / (1 - std::pow(0.999, t));
        x -= 0.02 * mh / (std::sqrt(vh) + 1e-8);
        auto [ns, nx] = ape::adam_step(state, Field2D(1, 1, g), xf);
        state = ns;
        xf = nx;
        EXPECT_NEAR(xf[0], x, 1e-15);
    }
}

TEST(FiniteDiff, SumOfSquares) {
    const auto g = ape::finite_diff_gradient(
        [](const Field2D& f) { return f[0] * f[0] + f[1] * f[1]; }, Field2D(2, 1, {1.0, 2.0}),
        1e-5);
    EXPECT_NEAR(g[0], 2.0, 1e-8);
    EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiff, ConstantFunction) {
    const auto g = ape::finite_diff_gradient([](const Field2D&) { return 3.0; },
                                             ape::testing::random_field(3, 3, 1), 1e-5);
    EXPECT_EQ(ape::max_abs(g), 0.0);
}

TEST(MaxRelativeError, UsesReferenceScale) {
    const Field2D b(2, 1, {2.0, -4.0});
    const Field2D a(2, 1, {2.0, -3.96});
    EXPECT_NEAR(ape::max_relative_error(a, b), 0.01, 1e-12);
}
