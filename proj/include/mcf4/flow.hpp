#pragma once

// Explicit discrete MCF (x ← x + dt·H with cotan H) plus the pinching monitors, the
// Poincaré-type integral check, type-I rescaling and the decay-exponent fit.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcf4/certifier.hpp"
#include "mcf4/curvature.hpp"
#include "mcf4/errors.hpp"
#include "mcf4/format.hpp"
#include "mcf4/geometry.hpp"
#include "mcf4/mesh.hpp"

namespace mcf4 {

struct FlowConfig {
    double k = 29.0 / 40.0;
    std::optional<double> gammaOverride;
    double eps = 0.0;
    double sigma = 0.05;
    double p = 10.0;
    double eta = 1.0;
    double cfl = 0.2;
    double stopA2 = 0.0;      // absolute; 0 means stopFactor × initial maxA2
    double stopFactor = 1e4;
    long maxSteps = 1'000'000;
    int outputEvery = 1;
    int maxHalvings = 10;
    double minAngleDeg = 5.0; // mesh-quality stop
    int jobs = 1;

    double gamma() const { return gammaOverride.value_or(pinchingGamma(k)); }

    void validate() const {
        if (!(cfl > 0.0 && cfl <= 0.5)) {
            throw ConfigError("flow.cfl must lie in (0, 0.5], got " + fmt(cfl));
        }
        if (!(sigma > 0.0 && sigma < 1.0)) {
            throw ConfigError("flow.sigma must lie in (0, 1), got " + fmt(sigma));
        }
        if (!(p >= 2.0)) {
            throw ConfigError("flow.p must be at least 2, got " + fmt(p));
        }
        if (!(eta > 0.0)) {
            throw ConfigError("flow.eta must be positive");
        }
        if (!(eps >= 0.0)) {
            throw ConfigError("flow.eps must be non-negative");
        }
        if (outputEvery < 1) {
            throw ConfigError("flow.output_every must be at least 1");
        }
        if (maxSteps < 0 || maxHalvings < 0) {
            throw ConfigError("flow.max_steps and flow.max_halvings must be non-negative");
        }
    }
};

struct FlowRow {
    long step = 0;
    double t = 0.0;
    double dt = 0.0;
    double minH = 0.0;
    double maxA2 = 0.0;
    double maxQ = 0.0;
    double maxFsigma = 0.0;
    double area = 0.0;
    double intFsigmaP = 0.0;
    double posBoundSlack = 0.0;
    double zRatioMin = 0.0;
    double poincareSlack = 0.0;
    double rescaledMaxAcirc2 = 0.0;
    // not written to CSV
    double maxH2 = 0.0;
    double maxPinch = 0.0; // max(|Å|² + 2γ|K⊥|)
    double minQ = 0.0;
};

struct FlowTrace {
    std::vector<FlowRow> rows;

    static const std::vector<std::string>& columns() {
        static const std::vector<std::string> c = {"step", "t", "dt", "minH", "maxA2", "maxQ", "maxFsigma",
                                                   "area", "intFsigmaP", "posBoundSlack", "zRatioMin",
                                                   "poincareSlack", "rescaledMaxAcirc2"};
        return c;
    }

    static std::vector<double> values(const FlowRow& r) {
        return {static_cast<double>(r.step), r.t, r.dt, r.minH, r.maxA2, r.maxQ, r.maxFsigma, r.area,
                r.intFsigmaP, r.posBoundSlack, r.zRatioMin, r.poincareSlack, r.rescaledMaxAcirc2};
    }

    void writeCsv(std::ostream& os) const {
        const auto& c = columns();
        for (std::size_t i = 0; i < c.size(); ++i) {
            os << (i ? "," : "") << c[i];
        }
        os << '\n';
        for (const auto& r : rows) {
            os << r.step;
            const auto v = values(r);
            for (std::size_t i = 1; i < v.size(); ++i) {
                os << ',' << fmt(v[i]);
            }
            os << '\n';
        }
    }

    /// One gnuplot data block per column (x = t), separated by two blank lines; select with `index`.
    void writeGnuplot(std::ostream& os) const {
        const auto& c = columns();
        for (std::size_t col = 0; col < c.size(); ++col) {
            os << "# " << col << ' ' << c[col] << '\n';
            for (const auto& r : rows) {
                os << fmt(r.t) << ' ' << fmt(values(r)[col]) << '\n';
            }
            os << "\n\n";
        }
    }
};

struct VertexScalars {
    double H2 = 0.0;
    double A2 = 0.0;
    double Q = 0.0;
    double pinch = 0.0; // |Å|² + 2γ|K⊥|
    double fsigma = std::numeric_limits<double>::quiet_NaN();
    double K = 0.0;
    double Kperp = 0.0;
};

inline VertexScalars vertexScalars(const VertexGeometry& g, const FlowConfig& cfg) {
    VertexScalars s;
    const auto& sc = g.scalars;
    s.H2 = g.shape.H.squaredNorm();
    s.A2 = sc.normA2;
    s.K = sc.gaussK;
    s.Kperp = sc.normalKperp;
    s.pinch = sc.normAcirc2 + 2 * cfg.gamma() * std::abs(sc.normalKperp);
    s.Q = sc.normA2 + 2 * cfg.gamma() * std::abs(sc.normalKperp) - cfg.k * s.H2 + cfg.eps;
    if (std::sqrt(s.H2) > kTolH) {
        s.fsigma = s.pinch / std::pow(s.H2, 1 - cfg.sigma);
    }
    return s;
}

struct PoincareSides {
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Discrete sides of
///   ∫ f^p |H|² ≤ ((4pη + 10)/ε_Z) ∫ f^{p-1} |∇A|² / |H|^{2(1-σ)} + (3(p-1)/(ε_Z η)) ∫ f^{p-2} |∇f|².
inline PoincareSides poincareCheck(const SurfaceMesh& m, const Topology& top, double p, double eta, double sigma,
                                   double gamma, double epsZ) {
    if (!(epsZ > 0.0)) {
        throw EpsilonZNotPositive("poincareCheck: epsilon_Z must be positive, got " + fmt(epsZ));
    }
    const std::size_t n = m.vertexCount();
    FlowConfig c;
    c.sigma = sigma;
    c.gammaOverride = gamma;
    std::vector<double> f(n, 0.0);
    std::vector<VertexScalars> vs(n);
    for (std::size_t v = 0; v < n; ++v) {
        vs[v] = vertexScalars(m.geometry[v], c);
        if (!std::isfinite(vs[v].fsigma)) {
            throw DegenerateMeanCurvature("poincareCheck: |H| below tolerance at vertex " + std::to_string(v));
        }
        f[v] = vs[v].fsigma;
    }
    double lhs = 0.0;
    double gradATerm = 0.0;
    double gradFTerm = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        const int iv = static_cast<int>(v);
        const double A = m.geometry[v].area;
        const double gA2 = normGradA2(shapeGradient(m, top, iv));
        const double gf2 = scalarGradient(m, top, iv, f).squaredNorm();
        lhs += std::pow(f[v], p) * vs[v].H2 * A;
        gradATerm += std::pow(f[v], p - 1) * gA2 / std::pow(vs[v].H2, 1 - sigma) * A;
        gradFTerm += std::pow(f[v], p - 2) * gf2 * A;
    }
    PoincareSides out;
    out.lhs = lhs;
    out.rhs = (4 * p * eta + 10) / epsZ * gradATerm + 3 * (p - 1) / (epsZ * eta) * gradFTerm;
    return out;
}

/// ε_Z for the flow: the sampled Z-ratio minimum over the pinching cone |A|² ≤ f|H|² with f the
/// initial max |A|²/|H|² (clamped just above 1/2). NaN when f ≥ 5/6.
inline double flowEpsilonZ(const SurfaceMesh& m, double gamma) {
    double f = 0.0;
    for (const auto& g : m.geometry) {
        const double H2 = g.shape.H.squaredNorm();
        if (H2 > 0) {
            f = std::max(f, g.scalars.normA2 / H2);
        }
    }
    f = std::max(f, 0.5 + 1e-6);
    if (!(f < 5.0 / 6.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return epsilonZScan(gamma, f, 64, 16).minRatio;
}

struct MonitorContext {
    double R0 = 0.0;  // max |F| at t = 0
    double epsZ = std::numeric_limits<double>::quiet_NaN();
};

inline FlowRow monitors(const SurfaceMesh& m, const Topology& top, const FlowConfig& cfg, double t,
                        const MonitorContext& ctx) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    FlowRow r;
    r.t = t;
    r.minH = std::numeric_limits<double>::infinity();
    r.maxA2 = -std::numeric_limits<double>::infinity();
    r.maxQ = -std::numeric_limits<double>::infinity();
    r.minQ = std::numeric_limits<double>::infinity();
    r.maxFsigma = -std::numeric_limits<double>::infinity();
    r.zRatioMin = std::numeric_limits<double>::infinity();
    double maxF2 = 0.0;
    bool fsigmaOk = true;
    for (std::size_t v = 0; v < m.vertexCount(); ++v) {
        const auto& g = m.geometry[v];
        const auto s = vertexScalars(g, cfg);
        r.minH = std::min(r.minH, std::sqrt(s.H2));
        r.maxA2 = std::max(r.maxA2, s.A2);
        r.maxH2 = std::max(r.maxH2, s.H2);
        r.maxQ = std::max(r.maxQ, s.Q);
        r.minQ = std::min(r.minQ, s.Q);
        r.maxPinch = std::max(r.maxPinch, s.pinch);
        if (std::isfinite(s.fsigma)) {
            r.maxFsigma = std::max(r.maxFsigma, s.fsigma);
            r.intFsigmaP += std::pow(s.fsigma, cfg.p) * g.area;
        } else {
            fsigmaOk = false;
        }
        if (g.state && s.A2 < 5.0 / 6.0 * s.H2) {
            try {
                r.zRatioMin = std::min(r.zRatioMin, zLowerBoundRatio(*g.state, cfg.gamma()));
            } catch (const UmbilicPoint&) {
                // ratio undefined at umbilic points
            }
        }
        maxF2 = std::max(maxF2, m.vertices[v].squaredNorm());
    }
    if (!fsigmaOk) {
        r.maxFsigma = nan;
        r.intFsigmaP = nan;
    }
    if (!std::isfinite(r.zRatioMin)) {
        r.zRatioMin = nan;
    }
    r.area = totalArea(m);
    r.posBoundSlack = ctx.R0 * ctx.R0 - 4 * t - maxF2;
    r.rescaledMaxAcirc2 = r.maxH2 > 0 ? r.maxPinch / r.maxH2 : nan;
    r.poincareSlack = nan;
    if (fsigmaOk && ctx.epsZ > 0.0) {
        const auto ps = poincareCheck(m, top, cfg.p, cfg.eta, cfg.sigma, cfg.gamma(), ctx.epsZ);
        if (ps.rhs > 0.0) {
            r.poincareSlack = 1.0 - ps.lhs / ps.rhs;
        } else if (ps.lhs == 0.0) {
            r.poincareSlack = 0.0;
        }
    }
    return r;
}

namespace detail {

inline double signedProjectedArea(const Frame42& T, const Vec4& a, const Vec4& b, const Vec4& c) {
    const Eigen::Vector2d u = T.transpose() * (b - a);
    const Eigen::Vector2d w = T.transpose() * (c - a);
    return 0.5 * (u.x() * w.y() - u.y() * w.x());
}

} // namespace detail

/// Cotan H projected onto the recovered normal plane. The smooth H is normal; the tangential
/// part of the discrete vector only slides vertices along the surface and degrades the mesh.
inline Vec4 flowVelocity(const VertexGeometry& g) { return g.normal * (g.normal.transpose() * g.meanCurvature); }

/// One explicit step. Geometry must be recovered; on return the caches are recomputed.
/// The proposed dt is halved while the area would increase or a triangle would invert in
/// the tangent plane of its first vertex.
inline double stepMCF(SurfaceMesh& m, const FlowConfig& cfg) {
    if (!m.hasGeometry()) {
        throw Error("stepMCF: geometry not recovered");
    }
    double minArea = std::numeric_limits<double>::infinity();
    double maxA2 = 0.0;
    for (const auto& g : m.geometry) {
        minArea = std::min(minArea, g.area);
        maxA2 = std::max(maxA2, g.scalars.normA2);
    }
    std::vector<Vec4> vel(m.vertexCount());
    for (std::size_t v = 0; v < m.vertexCount(); ++v) {
        vel[v] = flowVelocity(m.geometry[v]);
        if (!vel[v].allFinite()) {
            throw NonFiniteState("stepMCF: non-finite velocity at vertex " + std::to_string(v));
        }
    }
    double dt = cfg.cfl * std::min(minArea, 1.0 / maxA2);
    if (!std::isfinite(dt) || !(dt > 0.0)) {
        throw NonFiniteState("stepMCF: time step " + fmt(dt));
    }
    const double area0 = totalArea(m);
    SurfaceMesh next;
    next.triangles = m.triangles;
    for (int attempt = 0;; ++attempt) {
        next.vertices = m.vertices;
        for (std::size_t v = 0; v < m.vertexCount(); ++v) {
            next.vertices[v] += dt * vel[v];
        }
        bool ok = totalArea(next) < area0;
        for (std::size_t f = 0; ok && f < m.triangles.size(); ++f) {
            const auto& t = m.triangles[f];
            const auto& T = m.geometry[t[0]].tangent;
            const double before = detail::signedProjectedArea(T, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
            const double after =
                detail::signedProjectedArea(T, next.vertices[t[0]], next.vertices[t[1]], next.vertices[t[2]]);
            ok = before * after > 0.0;
        }
        if (ok) {
            break;
        }
        if (attempt == cfg.maxHalvings) {
            throw StepTooLarge("stepMCF: no acceptable step after " + std::to_string(cfg.maxHalvings) + " halvings");
        }
        dt /= 2;
    }
    for (const auto& x : next.vertices) {
        if (!x.allFinite()) {
            throw NonFiniteState("stepMCF: non-finite vertex position");
        }
    }
    m.vertices = std::move(next.vertices);
    m.invalidate();
    recoverGeometry(m, {false, cfg.jobs});
    return dt;
}

struct Snapshot {
    long step = 0;
    double t = 0.0;
    SurfaceMesh mesh; // with geometry
    FlowRow row;
};

struct FlowResult {
    FlowTrace trace;
    std::vector<Snapshot> snapshots;
    std::string stopReason;
    double stopA2 = 0.0;
    double initialMaxA2 = 0.0;
    double epsZ = std::numeric_limits<double>::quiet_NaN();
};

/// Called after every accepted step (and once at t = 0) with the current mesh and its row.
using FlowObserver = std::function<void(const SurfaceMesh&, const FlowRow&)>;

/// Runs until maxA2 reaches stopA2, the minimum angle drops below cfg.minAngleDeg, or maxSteps.
/// Snapshots are taken when maxA2 first reaches initial·10^{j/2}, j = 0..8, and at the stop.
inline FlowResult runFlow(SurfaceMesh m, const FlowConfig& cfg, const FlowObserver& observer = {}) {
    cfg.validate();
    FlowResult res;
    long step = 0;
    try {
        recoverGeometry(m, {false, cfg.jobs});
        const auto topo = std::shared_ptr<const Topology>(m.topology);
        const Topology& top = *topo;
        MonitorContext ctx;
        for (const auto& x : m.vertices) {
            ctx.R0 = std::max(ctx.R0, x.norm());
        }
        ctx.epsZ = flowEpsilonZ(m, cfg.gamma());
        res.epsZ = ctx.epsZ;

        double t = 0.0;
        FlowRow row = monitors(m, top, cfg, t, ctx);
        res.initialMaxA2 = row.maxA2;
        res.stopA2 = cfg.stopA2 > 0.0 ? cfg.stopA2 : cfg.stopFactor * row.maxA2;
        if (!(res.stopA2 > 0.0)) {
            throw DegenerateMeanCurvature("initial max |A|^2 is " + fmt(row.maxA2) + "; stopA2 = stopFactor * max|A|^2 is undefined");
        }
        std::vector<double> levels;
        for (int j = 0; j <= 8; ++j) {
            const double level = row.maxA2 * std::pow(10.0, j / 2.0);
            if (level <= res.stopA2) {
                levels.push_back(level);
            }
        }
        std::size_t nextLevel = 0;
        auto snapshotIfDue = [&](bool force) {
            bool due = force;
            while (nextLevel < levels.size() && row.maxA2 >= levels[nextLevel] * (1 - 1e-12)) {
                ++nextLevel;
                due = true;
            }
            if (due && (res.snapshots.empty() || res.snapshots.back().step != step)) {
                res.snapshots.push_back({step, t, m, row});
            }
        };
        res.trace.rows.push_back(row);
        snapshotIfDue(false);
        if (observer) {
            observer(m, row);
        }
        while (true) {
            if (row.maxA2 >= res.stopA2) {
                res.stopReason = "stopA2";
                break;
            }
            if (step >= cfg.maxSteps) {
                res.stopReason = "maxSteps";
                break;
            }
            if (minAngleDegrees(m) < cfg.minAngleDeg) {
                res.stopReason = "meshQuality";
                break;
            }
            const double dt = stepMCF(m, cfg);
            ++step;
            t += dt;
            row = monitors(m, top, cfg, t, ctx);
            row.step = step;
            row.dt = dt;
            if (!std::isfinite(row.maxA2) || !std::isfinite(row.area)) {
                throw NonFiniteState("non-finite monitor values");
            }
            if (step % cfg.outputEvery == 0 || row.maxA2 >= res.stopA2) {
                res.trace.rows.push_back(row);
            }
            snapshotIfDue(false);
            if (observer) {
                observer(m, row);
            }
        }
        if (res.trace.rows.back().step != step) {
            res.trace.rows.push_back(row);
        }
        snapshotIfDue(true);
    } catch (const FlowAborted&) {
        throw;
    } catch (const StepTooLarge& e) {
        throw FlowAborted(step, true, e.what());
    } catch (const NonFiniteState& e) {
        throw FlowAborted(step, true, e.what());
    } catch (const Error& e) {
        throw FlowAborted(step, false, e.what());
    }
    return res;
}

struct RescaledSnapshot {
    long step = 0;
    double t = 0.0;
    double lambda = 0.0;  // max |H|
    int center = 0;       // vertex of max |H|
    std::vector<Vec4> positions; // λ (F − F(center))
    std::vector<double> acircOverH2;
    double maxPinch = 0.0; // max(|Å|² + 2γ|K⊥|) / λ²
    double maxAcirc2 = 0.0; // max |Å|² / λ²
};

/// λ_j = max|H| at each snapshot; recentres at the max-|H| vertex and scales by λ_j.
inline std::vector<RescaledSnapshot> typeIRescale(const std::vector<Snapshot>& snapshots, double stopA2,
                                                  double gamma) {
    if (snapshots.empty() || snapshots.back().row.maxA2 < 0.5 * stopA2) {
        throw NoBlowupDetected("typeIRescale: last snapshot has maxA2 below half of stopA2");
    }
    std::vector<RescaledSnapshot> out;
    for (const auto& s : snapshots) {
        RescaledSnapshot r;
        r.step = s.step;
        r.t = s.t;
        const auto& geo = s.mesh.geometry;
        for (std::size_t v = 0; v < geo.size(); ++v) {
            const double h = geo[v].shape.H.norm();
            if (h > r.lambda) {
                r.lambda = h;
                r.center = static_cast<int>(v);
            }
        }
        const double l2 = r.lambda * r.lambda;
        for (std::size_t v = 0; v < geo.size(); ++v) {
            r.positions.push_back(r.lambda * (s.mesh.vertices[v] - s.mesh.vertices[r.center]));
            const auto& sc = geo[v].scalars;
            const double H2 = geo[v].shape.H.squaredNorm();
            r.acircOverH2.push_back(H2 > 0 ? sc.normAcirc2 / H2 : std::numeric_limits<double>::quiet_NaN());
            r.maxPinch = std::max(r.maxPinch, (sc.normAcirc2 + 2 * gamma * std::abs(sc.normalKperp)) / l2);
            r.maxAcirc2 = std::max(r.maxAcirc2, sc.normAcirc2 / l2);
        }
        out.push_back(std::move(r));
    }
    return out;
}

struct DecayFit {
    double c0 = 0.0;
    double delta = 0.0;
    std::size_t samples = 0;
    bool degenerate = false;
};

/// Least squares of log max(|Å|² + 2γ|K⊥|) against log max|H|² over rows with
/// maxA2 ≥ windowFactor · maxA2(0): max pinch ≈ c0 (max|H|)^{2-δ}, i.e. δ = 2 − 2·slope.
inline DecayFit decayExponentFit(const FlowTrace& trace, double windowFactor = 10.0) {
    if (trace.rows.empty()) {
        throw InsufficientDynamicRange("decayExponentFit: empty trace");
    }
    const double a0 = trace.rows.front().maxA2;
    std::vector<const FlowRow*> w;
    for (const auto& r : trace.rows) {
        if (r.maxA2 >= windowFactor * a0) {
            w.push_back(&r);
        }
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto* r : w) {
        lo = std::min(lo, r->maxA2);
        hi = std::max(hi, r->maxA2);
    }
    if (w.size() < 20 || !(hi >= 100 * lo)) {
        throw InsufficientDynamicRange("decayExponentFit: need >= 20 window samples spanning 2 decades of maxA2");
    }
    DecayFit fit;
    fit.samples = w.size();
    for (const auto* r : w) {
        if (!(r->maxPinch > 1e-12 * r->maxH2)) {
            fit.degenerate = true;
            fit.delta = 2.0;
            fit.c0 = 0.0;
            return fit;
        }
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto* r : w) {
        const double x = std::log(r->maxH2);
        const double y = std::log(r->maxPinch);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(w.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.delta = 2 - 2 * slope;
    fit.c0 = std::exp((sy - slope * sx) / n);
    return fit;
}

/// Per-vertex fields keyed by vertex index.
inline void writeSnapshotCsv(std::ostream& os, const SurfaceMesh& m, const FlowConfig& cfg) {
    os << "vertex,H,A2,Q,fsigma,K,Kperp\n";
    for (std::size_t v = 0; v < m.vertexCount(); ++v) {
        const auto s = vertexScalars(m.geometry[v], cfg);
        os << v << ',' << fmt(std::sqrt(s.H2)) << ',' << fmt(s.A2) << ',' << fmt(s.Q) << ',' << fmt(s.fsigma) << ','
           << fmt(s.K) << ',' << fmt(s.Kperp) << '\n';
    }
}

} // namespace mcf4
