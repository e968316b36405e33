#pragma once

// Randomised sweeps over the pointwise identities and gradient inequalities.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mcf4/curvature.hpp"
#include "mcf4/gradient.hpp"

namespace mcf4 {

struct PropertyResult {
    std::string name;
    /// "equality": worst relative error (must be ≤ tolerance);
    /// "inequality": worst slack / scale (must be ≥ -tolerance).
    std::string kind;
    double worst = 0.0;
    double tolerance = 0.0;
    std::uint64_t samples = 0;
    bool passed = true;
};

struct IdentityReport {
    std::uint64_t seed = 0;
    std::uint64_t count = 0;
    std::vector<PropertyResult> properties;

    bool passed() const {
        for (const auto& p : properties) {
            if (!p.passed) {
                return false;
            }
        }
        return true;
    }

    std::vector<std::string> failures() const {
        std::vector<std::string> out;
        for (const auto& p : properties) {
            if (!p.passed) {
                out.push_back(p.name);
            }
        }
        return out;
    }
};

/// Functions under test; swapped out by mutation tests.
struct IdentityHooks {
    std::function<double(const SpecialFrameState&)> simonsZClosed = [](const SpecialFrameState& s) {
        return mcf4::simonsZClosed(s);
    };
};

namespace detail {

inline double relDiff(double x, double y) { return std::abs(x - y) / (1.0 + std::abs(y)); }

struct Tracker {
    PropertyResult r;
    Tracker(std::string name, std::string kind, double tol) {
        r.name = std::move(name);
        r.kind = std::move(kind);
        r.tolerance = tol;
        r.worst = r.kind == "equality" ? 0.0 : std::numeric_limits<double>::infinity();
    }
    void equal(double err) {
        ++r.samples;
        if (!(err <= r.worst)) {
            r.worst = err;
        }
    }
    void slack(double s) {
        ++r.samples;
        if (!(s >= r.worst)) {
            r.worst = s;
        }
    }
    PropertyResult done() {
        r.passed = r.kind == "equality" ? r.worst <= r.tolerance : r.worst >= -r.tolerance;
        return r;
    }
};

} // namespace detail

inline IdentityReport runIdentitySweeps(std::uint64_t seed, std::uint64_t count, const IdentityHooks& hooks = {}) {
    IdentityReport rep;
    rep.seed = seed;
    rep.count = count;
    if (count == 0) {
        return rep;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto rot = [&] {
        const double th = 2 * std::numbers::pi * U(rng);
        Eigen::Matrix2d R;
        R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        if (U(rng) < 0.5) {
            R.col(1) *= -1;
        }
        return R;
    };

    detail::Tracker frame("frame_invariance", "equality", 1e-12);
    detail::Tracker gauss("gauss_equation", "equality", 1e-12);
    detail::Tracker rmperp("rm_perp_equals_4_kperp2", "equality", 1e-12);
    detail::Tracker simons("simons_z_closed_equals_tensor", "equality", 1e-12);
    detail::Tracker efsplit("ef_split_orthogonal", "equality", 1e-12);
    detail::Tracker g8a("gradient_8a", "inequality", 1e-12);
    detail::Tracker g8b("gradient_8b", "inequality", 1e-12);
    detail::Tracker g8c("gradient_8c", "inequality", 1e-12);
    detail::Tracker gk("grad_kperp_bound", "inequality", 1e-12);

    // fixed points first
    simons.equal(detail::relDiff(hooks.simonsZClosed({4, 1, 0, 1}), 8.0));
    {
        GradientState w;
        w.u = {0.75, 0, 0.25, 0};
        const double s = checkGradientInequalities(w).slack8a;
        g8a.slack(s == 0.0 ? 0.0 : -std::abs(s) - 1.0);
    }

    for (std::uint64_t n = 0; n < count; ++n) {
        Eigen::Matrix2d A1;
        Eigen::Matrix2d A2;
        const double x = N(rng);
        const double y = N(rng);
        A1 << N(rng), x, x, N(rng);
        A2 << N(rng), y, y, N(rng);
        const ShapeTensor t = ShapeTensor::fromComponents(A1, A2);
        const ShapeTensor moved = changeFrame(t, rot(), rot());
        const CurvatureScalars a = tensorScalars(t);
        const CurvatureScalars b = tensorScalars(moved);
        const double s2 = 1.0 + a.normA2;
        double err = 0.0;
        err = std::max(err, detail::relDiff(a.normA2, b.normA2));
        err = std::max(err, detail::relDiff(a.normAcirc2, b.normAcirc2));
        err = std::max(err, detail::relDiff(a.gaussK, b.gaussK));
        err = std::max(err, detail::relDiff(std::abs(a.normalKperp), std::abs(b.normalKperp)));
        err = std::max(err, detail::relDiff(a.normRmPerp2, b.normRmPerp2));
        err = std::max(err, detail::relDiff(a.R1, b.R1));
        err = std::max(err, detail::relDiff(a.R2, b.R2));
        if (t.H.norm() > kTolH) {
            const SpecialFrameState s = toSpecialFrame(t);
            const CurvatureScalars c = scalars(s);
            err = std::max(err, detail::relDiff(c.normA2, a.normA2));
            err = std::max(err, detail::relDiff(c.gaussK, a.gaussK));
            err = std::max(err, detail::relDiff(c.normalKperp, std::abs(a.normalKperp)));
            err = std::max(err, detail::relDiff(c.R1, a.R1));
            err = std::max(err, detail::relDiff(c.R2, a.R2));
            simons.equal(std::abs(hooks.simonsZClosed(s) - simonsZTensor(t)) / (s2 * s2));
        }
        frame.equal(err);
        gauss.equal(std::abs(2 * a.gaussK - (t.H.squaredNorm() - a.normA2)) / s2);
        rmperp.equal(std::abs(a.normRmPerp2 - 4 * a.normalKperp * a.normalKperp) / (s2 * s2));

        GradientState g;
        for (auto& c : g.u) {
            c = N(rng);
        }
        for (auto& c : g.v) {
            c = N(rng);
        }
        const auto [E, F] = decomposeEF(g);
        const double gs = 1.0 + normGradA2(g);
        efsplit.equal(std::abs(inner(E, F)) / gs);
        const auto sl = checkGradientInequalities(g);
        g8a.slack(sl.slack8a / gs);
        g8b.slack(sl.slack8b / gs);
        g8c.slack(sl.slack8c / gs);
        const SpecialFrameState st{std::abs(N(rng)) + 0.05, N(rng), N(rng), N(rng)};
        const auto [lhs, rhs] = gradKperpBound(st, g);
        gk.slack((rhs - lhs) / (1.0 + rhs));
    }
    for (auto* tr : {&frame, &gauss, &rmperp, &simons, &efsplit, &g8a, &g8b, &g8c, &gk}) {
        rep.properties.push_back(tr->done());
    }
    return rep;
}

inline nlohmann::json toJson(const IdentityReport& r) {
    nlohmann::json j;
    j["seed"] = r.seed;
    j["count"] = r.count;
    j["passed"] = r.passed();
    j["properties"] = nlohmann::json::array();
    for (const auto& p : r.properties) {
        j["properties"].push_back({{"name", p.name},
                                   {"kind", p.kind},
                                   {"worst", p.worst},
                                   {"tolerance", p.tolerance},
                                   {"samples", p.samples},
                                   {"passed", p.passed}});
    }
    return j;
}

} // namespace mcf4
