#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mcf4/gradient.hpp"
#include "test_support.hpp"

using namespace mcf4;
using mcf4::testing::Sampler;

namespace {

// Full tensor T[q][i][j][alpha] written out component by component.
struct FullTensor {
    double T[2][2][2][2]{};
};

FullTensor expand(const GradientState& g) {
    FullTensor f;
    for (int al = 0; al < 2; ++al) {
        const auto& x = g.direction(al);
        f.T[0][0][0][al] = x[0];
        f.T[1][0][0][al] = f.T[0][1][0][al] = f.T[0][0][1][al] = x[1];
        f.T[0][1][1][al] = f.T[1][0][1][al] = f.T[1][1][0][al] = x[2];
        f.T[1][1][1][al] = x[3];
    }
    return f;
}

double rawNormA2(const FullTensor& f) {
    double s = 0.0;
    for (auto& a : f.T) {
        for (auto& b : a) {
            for (auto& c : b) {
                for (double d : c) {
                    s += d * d;
                }
            }
        }
    }
    return s;
}

double rawNablaEvol(const FullTensor& f) {
    double s = 0.0;
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
            s += f.T[q][0][p][0] * f.T[q][1][p][1] - f.T[q][1][p][0] * f.T[q][0][p][1];
        }
    }
    return s;
}

GradientState make(std::array<double, 4> u, std::array<double, 4> v = {}) {
    GradientState g;
    g.u = u;
    g.v = v;
    return g;
}

} // namespace

TEST(GradNorms, Examples) {
    EXPECT_DOUBLE_EQ(normGradA2(make({1, 0, 0, 0})), 1.0);
    EXPECT_DOUBLE_EQ(normGradA2(make({0.75, 0, 0.25, 0})), 0.75);
    EXPECT_DOUBLE_EQ(normGradA2(make({0, 0, 0, 0})), 0.0);
    EXPECT_DOUBLE_EQ(normGradH2(make({1, 0, 0, 0})), 1.0);
    EXPECT_DOUBLE_EQ(normGradH2(make({1, 0, -1, 0})), 0.0);
    EXPECT_DOUBLE_EQ(normGradH2(make({0.75, 0, 0.25, 0})), 1.0);
}

TEST(GradNorms, MatchFullTensor) {
    Sampler rnd(1);
    for (int n = 0; n < 10000; ++n) {
        const auto g = rnd.gradient();
        const auto f = expand(g);
        ASSERT_NEAR(normGradA2(g), rawNormA2(f), 1e-12 * (1 + rawNormA2(f)));
        double gh = 0.0;
        for (int al = 0; al < 2; ++al) {
            for (int i = 0; i < 2; ++i) {
                const double d = f.T[i][0][0][al] + f.T[i][1][1][al];
                gh += d * d;
            }
        }
        ASSERT_NEAR(normGradH2(g), gh, 1e-12 * (1 + gh));
    }
}

TEST(DecomposeEF, EqualityWitnessLiesInE) {
    const auto g = make({0.75, 0, 0.25, 0});
    const auto [E, F] = decomposeEF(g);
    EXPECT_EQ(E.u, g.u);
    EXPECT_DOUBLE_EQ(normGradA2(F), 0.0);
}

TEST(DecomposeEF, TraceFreeLiesInF) {
    const auto g = make({1, 0, -1, 0});
    const auto [E, F] = decomposeEF(g);
    EXPECT_DOUBLE_EQ(normGradA2(E), 0.0);
    EXPECT_EQ(F.u, g.u);
}

TEST(DecomposeEF, OrthogonalSplit) {
    Sampler rnd(2);
    for (int n = 0; n < 100000; ++n) {
        const auto g = rnd.gradient();
        const auto [E, F] = decomposeEF(g);
        const double scale = 1 + normGradA2(g);
        ASSERT_NEAR(normGradA2(E) + normGradA2(F), normGradA2(g), 1e-12 * scale);
        ASSERT_NEAR(inner(E, F), 0.0, 1e-12 * scale);
        ASSERT_NEAR(normGradA2(E), 0.75 * normGradH2(g), 1e-12 * scale);
        for (std::size_t m = 0; m < 4; ++m) {
            ASSERT_NEAR(E.u[m] + F.u[m], g.u[m], 1e-15 * scale);
            ASSERT_NEAR(E.v[m] + F.v[m], g.v[m], 1e-15 * scale);
        }
    }
}

TEST(NablaEvol, Examples) {
    EXPECT_DOUBLE_EQ(nablaEvolKperp(make({0.3, -1, 2, 5})), 0.0);
    EXPECT_DOUBLE_EQ(nablaEvolKperp(make({1, 0, 0, 0}, {0, 1, 0, 0})), 1.0);
}

TEST(NablaEvol, SixTermFormMatchesRawDoubleSum) {
    Sampler rnd(3);
    for (int n = 0; n < 100000; ++n) {
        const auto g = rnd.gradient();
        const double raw = rawNablaEvol(expand(g));
        ASSERT_NEAR(nablaEvolKperp(g), raw, 1e-12 * (1 + std::abs(raw)));
    }
}

TEST(GradientInequalities, EqualityCaseOf8a) {
    const auto s = checkGradientInequalities(make({0.75, 0, 0.25, 0}));
    EXPECT_EQ(s.slack8a, 0.0);
}

TEST(GradientInequalities, ZeroGradient) {
    const auto s = checkGradientInequalities(GradientState{});
    EXPECT_EQ(s.slack8a, 0.0);
    EXPECT_EQ(s.slack8b, 0.0);
    EXPECT_EQ(s.slack8c, 0.0);
}

TEST(GradientInequalities, HoldOnMillionSamples) {
    Sampler rnd(4);
    double worst[3] = {1e300, 1e300, 1e300};
    for (int n = 0; n < 1000000; ++n) {
        const auto s = checkGradientInequalities(rnd.gradient());
        const double tol = -1e-12 * (1 + s.scale);
        ASSERT_GE(s.slack8a, tol);
        ASSERT_GE(s.slack8b, tol);
        ASSERT_GE(s.slack8c, tol);
        worst[0] = std::min(worst[0], s.slack8a / s.scale);
        worst[1] = std::min(worst[1], s.slack8b / s.scale);
        worst[2] = std::min(worst[2], s.slack8c / s.scale);
    }
    RecordProperty("worst8c", std::to_string(worst[2]));
}

TEST(GradientInequalities, Slack8cNearlyTightOnUnitSphere) {
    Sampler rnd(5);
    double minSlack = 1e300;
    for (int n = 0; n < 200000; ++n) {
        auto g = rnd.gradient();
        double r2 = 0.0;
        for (double x : g.u) {
            r2 += x * x;
        }
        for (double x : g.v) {
            r2 += x * x;
        }
        const double r = std::sqrt(r2);
        for (auto& x : g.u) {
            x /= r;
        }
        for (auto& x : g.v) {
            x /= r;
        }
        minSlack = std::min(minSlack, checkGradientInequalities(g).slack8c);
    }
    EXPECT_GE(minSlack, -1e-12);
    EXPECT_LT(minSlack, 0.05);
    EXPECT_NEAR(minSlack8cEigen(), 0.0, 1e-12);
}

TEST(GradKperp, UmbilicPointHasNoNormalCurvatureGradient) {
    Sampler rnd(6);
    for (int n = 0; n < 1000; ++n) {
        const SpecialFrameState s{std::abs(rnd.gauss()) + 0.1, 0, 0, 0};
        const auto [lhs, rhs] = gradKperpBound(s, rnd.gradient());
        ASSERT_EQ(rhs, 0.0);
        ASSERT_NEAR(lhs, 0.0, 1e-14);
    }
}

TEST(GradKperp, ZeroGradient) {
    const auto [lhs, rhs] = gradKperpBound({2, 0.3, 0.1, 0.4}, GradientState{});
    EXPECT_EQ(lhs, 0.0);
    EXPECT_EQ(rhs, 0.0);
}

TEST(GradKperp, BoundHoldsOnSamples) {
    Sampler rnd(7);
    double worstRatio = 0.0;
    for (int n = 0; n < 100000; ++n) {
        const auto s = rnd.state();
        const auto [lhs, rhs] = gradKperpBound(s, rnd.gradient());
        ASSERT_LE(lhs, rhs + 1e-12 * (1 + rhs));
        worstRatio = std::max(worstRatio, lhs / rhs);
    }
    EXPECT_LT(worstRatio, 1.0);
}

TEST(GradKperp, MatchesFiniteDifferenceOfKperp) {
    // Along a curve s(t) = s0 + t ds, K⊥ = 2ac changes by 2(a dc + c da); the gradient
    // formula with g carrying (da, db, dc) in direction q must agree.
    Sampler rnd(8);
    for (int n = 0; n < 1000; ++n) {
        const auto s = rnd.state();
        const double da = rnd.gauss();
        const double db = rnd.gauss();
        const double dc = rnd.gauss();
        // nabla_1 h in the special frame: A_1' = diag(da, -da), A_2' = [[db, dc], [dc, -db]]
        GradientState g;
        g.u = {da, 0, -da, 0};
        g.v = {db, dc, -db, 0};
        // Only T_{1jk} matches (A_1', A_2'); the q = 2 slot is whatever symmetry forces.
        const double d1 = gradKperp(s, g)(0);
        ASSERT_NEAR(d1, 2 * (s.a * dc + s.c * da), 1e-12 * (1 + std::abs(d1)));
    }
}
