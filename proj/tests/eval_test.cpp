#include "crush/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "testutil.hpp"

using namespace crush;

TEST(Moments, HandComputedExample) {
    const Moments mo = empirical_moments({{1.0, 2.0}, {3.0, 4.0}});
    EXPECT_DOUBLE_EQ(mo.mean[0], 2.0);
    EXPECT_DOUBLE_EQ(mo.mean[1], 3.0);
    EXPECT_DOUBLE_EQ(mo.var[0], 2.0);  // unbiased: ((1-2)^2 + (3-2)^2) / 1
    EXPECT_DOUBLE_EQ(mo.var[1], 2.0);
}

TEST(Moments, NeedsAtLeastTwoSamples) {
    EXPECT_THROW(empirical_moments({}), std::invalid_argument);
    EXPECT_THROW(empirical_moments({{1.0}}), std::invalid_argument);
    EXPECT_NO_THROW(empirical_moments({{1.0}, {1.0}}));
}

TEST(W2, HandComputedExamples) {
    EXPECT_DOUBLE_EQ(w2_gaussian({0.0}, {1.0}, {0.0}, {1.0}), 0.0);
    EXPECT_DOUBLE_EQ(w2_gaussian({0.0}, {1.0}, {3.0}, {1.0}), 3.0);
    // variance-only gap: |sqrt(1) - sqrt(4)| = 1
    EXPECT_DOUBLE_EQ(w2_gaussian({0.0}, {1.0}, {0.0}, {4.0}), 1.0);
    EXPECT_DOUBLE_EQ(w2_gaussian({1.0, 0.0}, {1.0, 1.0}, {1.0, 4.0}, {1.0, 9.0}),
                     std::sqrt(16.0 + 4.0));
}

TEST(W2, MetricProperties) {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> dm(-2.0, 2.0), dv(0.2, 3.0);
    for (int i = 0; i < 200; ++i) {
        const Vec ma{dm(gen), dm(gen)}, mb{dm(gen), dm(gen)}, mc{dm(gen), dm(gen)};
        const Vec va{dv(gen), dv(gen)}, vb{dv(gen), dv(gen)}, vc{dv(gen), dv(gen)};
        const double ab = w2_gaussian(ma, va, mb, vb);
        const double ba = w2_gaussian(mb, vb, ma, va);
        const double ac = w2_gaussian(ma, va, mc, vc);
        const double cb = w2_gaussian(mc, vc, mb, vb);
        EXPECT_DOUBLE_EQ(ab, ba);
        EXPECT_LE(ab, ac + cb + 1e-12);
        EXPECT_GE(ab, 0.0);
    }
}

TEST(W2, RejectsBadInput) {
    EXPECT_THROW(w2_gaussian({0.0}, {0.0}, {0.0}, {1.0}), std::invalid_argument);
    EXPECT_THROW(w2_gaussian({0.0}, {-1.0}, {0.0}, {1.0}), std::invalid_argument);
    EXPECT_THROW(w2_gaussian({0.0, 0.0}, {1.0, 1.0}, {0.0}, {1.0}), std::invalid_argument);
}

TEST(W2, MomentsOverloadMatches) {
    const Moments a{{1.0, -1.0}, {2.0, 0.5}};
    const Moments b{{0.0, 0.0}, {1.0, 1.0}};
    EXPECT_DOUBLE_EQ(w2_gaussian(a, b), w2_gaussian(a.mean, a.var, b.mean, b.var));
}

TEST(FiniteDiff, ExactOnQuadratics) {
    // central differences are exact for quadratics up to roundoff
    const auto f = [](const Vec& x) {
        return 3.0 * x[0] - 2.0 * x[1] + x[0] * x[0] + 0.5 * x[1] * x[1];
    };
    const Vec g = finite_diff_grad(f, {1.5, -0.5});
    EXPECT_NEAR(g[0], 3.0 + 2.0 * 1.5, 1e-9);
    EXPECT_NEAR(g[1], -2.0 - 0.5, 1e-9);
}

TEST(FiniteDiff, TranscendentalWithinH2) {
    const auto f = [](const Vec& x) { return std::sin(x[0]) * std::exp(x[1]); };
    const Vec x{0.7, -0.3};
    const Vec g = finite_diff_grad(f, x);
    EXPECT_NEAR(g[0], std::cos(0.7) * std::exp(-0.3), 1e-7);
    EXPECT_NEAR(g[1], std::sin(0.7) * std::exp(-0.3), 1e-7);
}

TEST(CheckRecord, PassIsInclusiveThreshold) {
    EXPECT_TRUE(make_check("a", 0.5, 0.5).pass);
    EXPECT_TRUE(make_check("b", 0.0, 0.0).pass);
    EXPECT_FALSE(make_check("c", 0.500001, 0.5).pass);
}

TEST(AffineLogSnr, LogisticCurvesSatisfyIdentity) {
    for (const auto& [a, b] : {std::pair{9.0, -9.0}, {2.0, -5.0}, {0.5, -3.0}}) {
        const AffineLogSnrReport rep = check_affine_logsnr(a, b);
        EXPECT_TRUE(rep.pass) << "a=" << a << " b=" << b << " res=" << rep.max_residual;
        EXPECT_FALSE(rep.degenerate);
        EXPECT_LT(rep.max_residual, 1e-12);
    }
}

TEST(AffineLogSnr, ZeroSlopeIsDegenerate) {
    const AffineLogSnrReport rep = check_affine_logsnr(0.0, -2.0);
    EXPECT_TRUE(rep.degenerate);
    EXPECT_TRUE(rep.pass);  // g and a sigma^2 are both identically zero
    EXPECT_DOUBLE_EQ(rep.max_residual, 0.0);
}

// The residual must actually notice when the derivative no longer matches the
// curve, otherwise the identity check above proves nothing.
TEST(AffineLogSnr, ResidualDetectsPerturbedDerivative) {
    const double a = 4.0, b = -2.0, t = 0.5;
    const double sig = 1.0 / (1.0 + std::exp(-(a * t + b)));
    const double sigma = std::sqrt(sig);
    const double dsigma = a * sig * (1.0 - sig) / (2.0 * sigma);
    const auto residual = [&](double scale) {
        const Coeffs c = coeffs_from_sigma(Relation::vp(), sigma, dsigma * scale);
        return std::abs(c.g * c.g - a * sigma * sigma);
    };
    EXPECT_LT(residual(1.0), 1e-14);
    const double r1 = residual(1.01);
    const double r2 = residual(1.02);
    EXPECT_GT(r1, 1e-4);
    EXPECT_NEAR(r2 / r1, 2.0, 0.2);  // first order in the perturbation
}
