#include <gtest/gtest.h>

#include <sstream>

#include "mcf4/flow.hpp"

using namespace mcf4;

namespace {

double meanRadius(const SurfaceMesh& m) {
    double s = 0;
    for (const auto& x : m.vertices) {
        s += x.norm();
    }
    return s / static_cast<double>(m.vertexCount());
}

SurfaceMesh recovered(SurfaceMesh m) {
    recoverGeometry(m);
    return m;
}

// shared small runs
const FlowResult& sphereRun() {
    static const FlowResult r = [] {
        FlowConfig cfg;
        cfg.cfl = 0.1;
        cfg.stopFactor = 2000;
        return runFlow(icosphere(1.0, 3), cfg);
    }();
    return r;
}

} // namespace

TEST(FlowConfig, DefaultsAndValidation) {
    FlowConfig cfg;
    EXPECT_NEAR(cfg.gamma(), 1.0 / 30.0, 1e-15);
    cfg.gammaOverride = 0.5;
    EXPECT_EQ(cfg.gamma(), 0.5);
    EXPECT_NO_THROW(cfg.validate());
    for (double cfl : {0.0, -0.1, 0.51}) {
        FlowConfig c;
        c.cfl = cfl;
        EXPECT_THROW(c.validate(), ConfigError);
    }
    FlowConfig c;
    c.cfl = 0.5;
    EXPECT_NO_THROW(c.validate());
    c.p = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    FlowConfig d;
    d.sigma = 1.0;
    EXPECT_THROW(d.validate(), ConfigError);
    FlowConfig e;
    e.outputEvery = 0;
    EXPECT_THROW(e.validate(), ConfigError);
}

TEST(Monitors, RoundSphereValues) {
    for (double r : {1.0, 2.0}) {
        auto m = recovered(icosphere(r, 3));
        FlowConfig cfg;
        MonitorContext ctx{r, flowEpsilonZ(m, cfg.gamma())};
        const auto row = monitors(m, *m.topology, cfg, 0.0, ctx);
        EXPECT_NEAR(row.maxQ, -0.9 / (r * r), 0.01 * 0.9 / (r * r));
        EXPECT_NEAR(row.minH, 2 / r, 0.02 * 2 / r);
        EXPECT_NEAR(row.posBoundSlack, 0.0, 1e-12);
        EXPECT_LE(row.rescaledMaxAcirc2, 1e-3);
        EXPECT_LE(row.intFsigmaP, 1e-30);
        EXPECT_TRUE(std::isnan(row.zRatioMin)); // every vertex is umbilic
    }
}

TEST(Monitors, CliffordTorusViolatesHypothesis) {
    auto m = recovered(productTorus(1, 1, 64, 64));
    FlowConfig cfg;
    const auto row = monitors(m, *m.topology, cfg, 0.0, {std::sqrt(2.0), flowEpsilonZ(m, cfg.gamma())});
    EXPECT_NEAR(row.maxQ, (1 - cfg.k) * 2.0, 0.02 * (1 - cfg.k) * 2.0);
    EXPECT_GT(row.minQ, 0.0);
    EXPECT_TRUE(std::isnan(flowEpsilonZ(m, cfg.gamma())));
}

TEST(Monitors, PinchedEllipsoidSatisfiesHypothesis) {
    auto m = recovered(ellipsoidPlusBump(1.2, 1, 0.9, 0.1, 3));
    FlowConfig cfg;
    const double epsZ = flowEpsilonZ(m, cfg.gamma());
    EXPECT_GT(epsZ, 0.0);
    const auto row = monitors(m, *m.topology, cfg, 0.0, {1.2, epsZ});
    EXPECT_LT(row.maxQ, 0.0);
    EXPECT_GT(row.maxFsigma, 0.0);
    EXPECT_GE(row.posBoundSlack, 0.0);
    EXPECT_GT(row.zRatioMin, 0.0);
}

TEST(Poincare, SphereIsTrivial) {
    auto m = recovered(icosphere(1.0, 3));
    const auto s = poincareCheck(m, *m.topology, 10, 1, 0.05, 1.0 / 30, 0.4);
    EXPECT_LE(s.lhs, 1e-40);
    EXPECT_LE(s.lhs, s.rhs * 1.25 + 1e-40);
}

TEST(Poincare, EllipsoidHoldsForSeveralExponents) {
    auto m = recovered(ellipsoidPlusBump(1.2, 1, 0.9, 0.1, 3));
    const double epsZ = flowEpsilonZ(m, 1.0 / 30);
    for (double p : {2.0, 10.0}) {
        const auto s = poincareCheck(m, *m.topology, p, 1, 0.05, 1.0 / 30, epsZ);
        EXPECT_GT(s.lhs, 0.0);
        EXPECT_LE(s.lhs, 1.25 * s.rhs) << "p = " << p;
    }
}

TEST(Poincare, CoefficientStructure) {
    // rhs(η) = (4pη + 10)/ε · GA + 3(p − 1)/(ε η) · GF; solve for GA, GF from two η and predict a third.
    auto m = recovered(ellipsoidPlusBump(1.2, 1, 0.9, 0.1, 2));
    const double p = 4;
    const double e = 0.3;
    auto rhs = [&](double eta) { return poincareCheck(m, *m.topology, p, eta, 0.05, 1.0 / 30, e).rhs; };
    Eigen::Matrix2d M;
    M << (4 * p * 1 + 10) / e, 3 * (p - 1) / (e * 1), (4 * p * 2 + 10) / e, 3 * (p - 1) / (e * 2);
    const Eigen::Vector2d g = M.partialPivLu().solve(Eigen::Vector2d(rhs(1), rhs(2)));
    const double predicted = (4 * p * 5 + 10) / e * g[0] + 3 * (p - 1) / (e * 5) * g[1];
    EXPECT_NEAR(rhs(5), predicted, 1e-10 * predicted);
    // 1/ε_Z scaling
    EXPECT_NEAR(poincareCheck(m, *m.topology, p, 1, 0.05, 1.0 / 30, 2 * e).rhs, rhs(1) / 2, 1e-12 * rhs(1));
    EXPECT_THROW(poincareCheck(m, *m.topology, p, 1, 0.05, 1.0 / 30, 0.0), EpsilonZNotPositive);
}

TEST(Step, TimeStepRuleAndInwardMotion) {
    auto m = recovered(icosphere(1.0, 3));
    double minArea = 1e9;
    double maxA2 = 0;
    for (const auto& g : m.geometry) {
        minArea = std::min(minArea, g.area);
        maxA2 = std::max(maxA2, g.scalars.normA2);
    }
    FlowConfig cfg;
    const auto before = m.vertices;
    const double dt = stepMCF(m, cfg);
    EXPECT_DOUBLE_EQ(dt, cfg.cfl * std::min(minArea, 1 / maxA2));
    ASSERT_TRUE(m.hasGeometry());
    for (std::size_t v = 0; v < m.vertexCount(); ++v) {
        EXPECT_LT(m.vertices[v].norm(), before[v].norm());
        EXPECT_LE((m.vertices[v] - before[v]).norm(), dt * 2.1); // |H| ≈ 2
    }
}

TEST(Step, FirstOrderAreaChange) {
    // d/dt area = −Σ A_i H_i · v_i exactly for the cotan H; the residual must be O(dt²).
    const auto m = recovered(ellipsoidPlusBump(1.2, 1, 0.9, 0.1, 3));
    double rate = 0;
    for (const auto& g : m.geometry) {
        rate -= g.area * g.meanCurvature.dot(flowVelocity(g));
    }
    EXPECT_LT(rate, 0.0);
    const double a0 = totalArea(m);
    auto residual = [&](double dt) {
        SurfaceMesh n = m;
        for (std::size_t v = 0; v < n.vertexCount(); ++v) {
            n.vertices[v] += dt * flowVelocity(m.geometry[v]);
        }
        return std::abs(totalArea(n) - a0 - dt * rate);
    };
    const double r1 = residual(1e-3);
    const double r2 = residual(1e-4);
    EXPECT_LT(r1, 1e-3 * std::abs(rate) * 1e-3 * 10);
    EXPECT_NEAR(r1 / r2, 100.0, 10.0);
}

TEST(Step, VelocityIsNormal) {
    const auto m = recovered(ellipsoidPlusBump(1.2, 1, 0.9, 0.1, 3));
    for (const auto& g : m.geometry) {
        const Vec4 v = flowVelocity(g);
        EXPECT_LE((g.tangent.transpose() * v).norm(), 1e-12 * (1 + v.norm()));
    }
}

TEST(Step, RejectsHugeStep) {
    auto m = recovered(icosphere(1.0, 2));
    FlowConfig cfg;
    cfg.cfl = 1e3; // stepMCF does not validate; overshoots the origin
    cfg.maxHalvings = 0;
    EXPECT_THROW(stepMCF(m, cfg), StepTooLarge);
    cfg.maxHalvings = 20;
    auto m2 = recovered(icosphere(1.0, 2));
    EXPECT_NO_THROW(stepMCF(m2, cfg));
}

TEST(Step, NonFiniteVelocity) {
    auto m = recovered(icosphere(1.0, 2));
    m.geometry[3].meanCurvature[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(stepMCF(m, FlowConfig{}), NonFiniteState);
    SurfaceMesh fresh = icosphere(1.0, 2);
    EXPECT_THROW(stepMCF(fresh, FlowConfig{}), Error);
}

TEST(Run, SphereFollowsExactRadius) {
    const auto& res = sphereRun();
    EXPECT_EQ(res.stopReason, "stopA2");
    const auto& rows = res.trace.rows;
    ASSERT_GT(rows.size(), 20u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_GT(rows[i].t, rows[i - 1].t);
        EXPECT_LT(rows[i].area, rows[i - 1].area);
        EXPECT_EQ(rows[i].step, rows[i - 1].step + 1);
        EXPECT_GE(rows[i].posBoundSlack, -0.01); // explicit Euler lags the exact r² by O(dt)
        EXPECT_LT(rows[i].maxQ, 0.0);
    }
    for (const auto& s : res.snapshots) {
        const double exact = std::sqrt(1 - 4 * s.t);
        if (!(exact >= 0.2)) {
            continue;
        }
        EXPECT_NEAR(meanRadius(s.mesh), exact, 0.01 * exact) << "t = " << s.t;
        EXPECT_LE(s.row.rescaledMaxAcirc2, 1e-3);
    }
}

TEST(Run, SnapshotsAtGeometricLevels) {
    const auto& res = sphereRun();
    ASSERT_EQ(res.snapshots.size(), 8u); // 10^{0, .5, ..., 3} and the stop
    EXPECT_EQ(res.snapshots.front().step, 0);
    EXPECT_EQ(res.snapshots.back().step, res.trace.rows.back().step);
    for (std::size_t j = 0; j + 1 < res.snapshots.size(); ++j) {
        EXPECT_GE(res.snapshots[j].row.maxA2, res.initialMaxA2 * std::pow(10.0, j / 2.0) * (1 - 1e-12));
        ASSERT_TRUE(res.snapshots[j].mesh.hasGeometry());
    }
}

TEST(Run, TypeIRescaleOfShrinkingSphere) {
    const auto& res = sphereRun();
    const auto rs = typeIRescale(res.snapshots, res.stopA2, 1.0 / 30);
    ASSERT_EQ(rs.size(), res.snapshots.size());
    for (std::size_t j = 0; j < rs.size(); ++j) {
        const auto& r = rs[j];
        EXPECT_LE(r.maxAcirc2, 1e-3);
        EXPECT_EQ(r.positions[r.center], Vec4::Zero());
        EXPECT_NEAR(r.lambda, res.snapshots[j].mesh.geometry[r.center].shape.H.norm(), 1e-12 * r.lambda);
        if (j > 0) {
            EXPECT_GT(r.lambda, rs[j - 1].lambda);
        }
        // a unit-|H| sphere has radius 2: the rescaled centroid sits at distance 2 from the centre vertex
        Vec4 c = Vec4::Zero();
        for (const auto& x : r.positions) {
            c += x;
        }
        c /= static_cast<double>(r.positions.size());
        EXPECT_NEAR(c.norm(), 2.0, 0.02);
        for (double q : r.acircOverH2) {
            EXPECT_LE(q, 1e-3);
        }
    }
}

TEST(Run, RescaleNeedsBlowup) {
    FlowConfig cfg;
    cfg.maxSteps = 3;
    const auto res = runFlow(icosphere(1.0, 2), cfg);
    EXPECT_EQ(res.stopReason, "maxSteps");
    EXPECT_THROW(typeIRescale(res.snapshots, res.stopA2, cfg.gamma()), NoBlowupDetected);
    EXPECT_THROW(typeIRescale({}, 1.0, cfg.gamma()), NoBlowupDetected);
}

TEST(Run, DecayFitDegenerateOnSphere) {
    const auto fit = decayExponentFit(sphereRun().trace);
    EXPECT_TRUE(fit.degenerate);
    EXPECT_EQ(fit.delta, 2.0);
}

TEST(Run, DecayFitRecoversSyntheticExponent) {
    FlowTrace tr;
    for (int i = 0; i <= 40; ++i) {
        FlowRow r;
        r.step = i;
        r.maxA2 = std::pow(10.0, 0.1 * i);
        r.maxH2 = 2 * r.maxA2;
        r.maxPinch = 0.3 * std::pow(std::sqrt(r.maxH2), 2 - 0.4);
        tr.rows.push_back(r);
    }
    const auto fit = decayExponentFit(tr);
    EXPECT_NEAR(fit.delta, 0.4, 1e-10);
    EXPECT_NEAR(fit.c0, 0.3, 1e-10);
    EXPECT_EQ(fit.samples, 31u);
    tr.rows.resize(25);
    EXPECT_THROW(decayExponentFit(tr), InsufficientDynamicRange);
    EXPECT_THROW(decayExponentFit(FlowTrace{}), InsufficientDynamicRange);
}

TEST(Run, ErrorsCarryStepIndex) {
    auto m = icosphere(1.0, 2);
    m.vertices[5] = Vec4(std::nan(""), 0, 0, 0);
    try {
        runFlow(m, FlowConfig{});
        FAIL() << "expected FlowAborted";
    } catch (const FlowAborted& e) {
        EXPECT_EQ(e.step(), 0);
    }
    FlowConfig bad;
    bad.cfl = 2;
    EXPECT_THROW(runFlow(icosphere(1.0, 2), bad), ConfigError);
}

TEST(Run, MeshQualityStop) {
    FlowConfig cfg;
    cfg.minAngleDeg = 59.0; // icosphere angles are below this from the start
    const auto res = runFlow(icosphere(1.0, 2), cfg);
    EXPECT_EQ(res.stopReason, "meshQuality");
    EXPECT_EQ(res.trace.rows.size(), 1u);
}

TEST(Run, ObserverSeesEveryStep) {
    FlowConfig cfg;
    cfg.maxSteps = 7;
    cfg.outputEvery = 3;
    std::vector<long> seen;
    const auto res = runFlow(icosphere(1.0, 2), cfg, [&](const SurfaceMesh&, const FlowRow& r) { seen.push_back(r.step); });
    EXPECT_EQ(seen, (std::vector<long>{0, 1, 2, 3, 4, 5, 6, 7}));
    std::vector<long> rows;
    for (const auto& r : res.trace.rows) {
        rows.push_back(r.step);
    }
    EXPECT_EQ(rows, (std::vector<long>{0, 3, 6, 7}));
}

TEST(Output, CsvLayoutAndDeterminism) {
    FlowConfig cfg;
    cfg.maxSteps = 5;
    auto csv = [&](int jobs) {
        FlowConfig c = cfg;
        c.jobs = jobs;
        std::ostringstream os;
        runFlow(ellipsoidPlusBump(1.2, 1, 0.9, 0.1, 2), c).trace.writeCsv(os);
        return os.str();
    };
    const std::string a = csv(1);
    EXPECT_EQ(a, csv(1));
    EXPECT_EQ(a, csv(3));
    EXPECT_EQ(a.substr(0, a.find('\n')),
              "step,t,dt,minH,maxA2,maxQ,maxFsigma,area,intFsigmaP,posBoundSlack,zRatioMin,poincareSlack,"
              "rescaledMaxAcirc2");
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 7);
}

TEST(Output, ShortestRoundTripFloats) {
    FlowTrace tr;
    FlowRow r;
    r.t = 0.1;
    r.dt = 1.0 / 3.0;
    tr.rows.push_back(r);
    std::ostringstream os;
    tr.writeCsv(os);
    const std::string line = os.str().substr(os.str().find('\n') + 1);
    EXPECT_EQ(line.substr(0, 24), "0,0.1,0.3333333333333333");
}

TEST(Output, GnuplotBlocksPerColumn) {
    FlowTrace tr;
    tr.rows.resize(3);
    std::ostringstream os;
    tr.writeGnuplot(os);
    const std::string s = os.str();
    std::size_t blocks = 0;
    for (std::size_t pos = 0; (pos = s.find("\n\n\n", pos)) != std::string::npos; ++pos) {
        ++blocks;
    }
    EXPECT_EQ(blocks, FlowTrace::columns().size());
}

TEST(Output, SnapshotCsv) {
    const auto m = recovered(icosphere(1.0, 1));
    std::ostringstream os;
    writeSnapshotCsv(os, m, FlowConfig{});
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "vertex,H,A2,Q,fsigma,K,Kperp");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), static_cast<long>(m.vertexCount()) + 1);
}
