#pragma once

// Discrete curvature recovery on SurfaceMesh:
//  - mixed Voronoi areas and the cotan Laplacian of the position (flow velocity H),
//  - a 2-ring quadratic jet fit per vertex for the full second fundamental form,
//  - least-squares tangential gradients of fitted tensors and vertex scalars.

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mcf4/curvature.hpp"
#include "mcf4/errors.hpp"
#include "mcf4/mesh.hpp"

namespace mcf4 {

struct RecoverOptions {
    bool allowBoundary = false; // open meshes; vertices without a usable 2-ring get NaN curvature
    int jobs = 1;
};

namespace detail {

inline double cotAngle(const Vec4& u, const Vec4& w) {
    const double d = u.dot(w);
    const double cr = std::sqrt(std::max(0.0, u.squaredNorm() * w.squaredNorm() - d * d));
    return d / cr;
}

template <class F>
void parallelFor(std::size_t n, int jobs, F&& body) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
    const std::size_t per = (n + jobs - 1) / jobs;
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                const std::size_t b = std::min(n, per * w);
                const std::size_t e = std::min(n, b + per);
                for (std::size_t i = b; i < e; ++i) {
                    body(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

/// Nearest orthogonal matrix (polar factor), closed form: best rotation or best reflection.
inline Eigen::Matrix2d polar(const Eigen::Matrix2d& M) {
    const double a = M(0, 0), b = M(0, 1), c = M(1, 0), d = M(1, 1);
    Eigen::Matrix2d R;
    if (std::hypot(a + d, c - b) >= std::hypot(a - d, b + c)) {
        const double th = std::atan2(c - b, a + d);
        R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    } else {
        const double ph = std::atan2(b + c, a - d);
        R << std::cos(ph), std::sin(ph), std::sin(ph), -std::cos(ph);
    }
    return R;
}

} // namespace detail

/// Mixed Voronoi areas (obtuse triangles split 1/2, 1/4, 1/4).
inline std::vector<double> mixedAreas(const SurfaceMesh& m) {
    std::vector<double> area(m.vertices.size(), 0.0);
    for (const auto& t : m.triangles) {
        const double A = triangleArea(m, t);
        Vec4 e[3];
        double cot[3];
        bool obtuse = false;
        int obtuseAt = -1;
        for (int k = 0; k < 3; ++k) {
            const Vec4 u = m.vertices[t[(k + 1) % 3]] - m.vertices[t[k]];
            const Vec4 w = m.vertices[t[(k + 2) % 3]] - m.vertices[t[k]];
            cot[k] = detail::cotAngle(u, w);
            e[k] = m.vertices[t[(k + 2) % 3]] - m.vertices[t[(k + 1) % 3]]; // opposite to corner k
            if (u.dot(w) < 0) {
                obtuse = true;
                obtuseAt = k;
            }
        }
        if (!obtuse) {
            for (int k = 0; k < 3; ++k) {
                // corner k touches the edges opposite k+1 and k+2
                const int k1 = (k + 1) % 3;
                const int k2 = (k + 2) % 3;
                area[t[k]] += (e[k1].squaredNorm() * cot[k1] + e[k2].squaredNorm() * cot[k2]) / 8;
            }
        } else {
            for (int k = 0; k < 3; ++k) {
                area[t[k]] += k == obtuseAt ? A / 2 : A / 4;
            }
        }
    }
    return area;
}

/// Cotan Laplace-Beltrami of the position, (1/2A_i) Σ_j (cot α_ij + cot β_ij)(x_j − x_i) ≈ H.
inline std::vector<Vec4> cotanMeanCurvature(const SurfaceMesh& m, const std::vector<double>& area) {
    std::vector<Vec4> L(m.vertices.size(), Vec4::Zero());
    for (const auto& t : m.triangles) {
        for (int k = 0; k < 3; ++k) {
            const int i = t[(k + 1) % 3];
            const int j = t[(k + 2) % 3];
            const double c = detail::cotAngle(m.vertices[i] - m.vertices[t[k]], m.vertices[j] - m.vertices[t[k]]);
            const Vec4 d = m.vertices[j] - m.vertices[i];
            L[i] += 0.5 * c * d;
            L[j] -= 0.5 * c * d;
        }
    }
    for (std::size_t v = 0; v < L.size(); ++v) {
        L[v] /= area[v];
    }
    return L;
}

struct JetFit {
    Frame42 tangent;
    Frame42 normal;
    ShapeTensor shape;
};

/// Quadratic jet of the two normal offsets over tangent coordinates, fitted to the vertex
/// and its neighborhood. Quadratic monomials use chord-length rescaled tangent coordinates
/// x·|d|/|x| (removes the quartic bias of the plain jet on round pieces). The frame starts
/// from the 2-ring covariance and is refined twice from the fitted linear terms.
inline JetFit fitJet(const SurfaceMesh& m, int v, const std::vector<int>& nbrs) {
    const int n = static_cast<int>(nbrs.size());
    if (n < 6) {
        throw DegenerateNeighborhood("vertex " + std::to_string(v) + " has fewer than 6 neighbors in its 2-ring");
    }
    std::vector<Vec4> X(static_cast<std::size_t>(n));
    Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
    double rms = 0.0;
    for (int r = 0; r < n; ++r) {
        X[r] = m.vertices[nbrs[r]] - m.vertices[v];
        C += X[r] * X[r].transpose();
        rms += X[r].squaredNorm();
    }
    // coordinates are scaled by the rms chord so the normal equations stay well conditioned
    const double scale = std::sqrt(rms / n);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(C);
    Frame42 T = es.eigenvectors().rightCols<2>();
    Frame42 N = es.eigenvectors().leftCols<2>();

    using Mat6 = Eigen::Matrix<double, 6, 6>;
    using Vec6 = Eigen::Matrix<double, 6, 1>;
    Eigen::Matrix<double, 6, 2> coef;
    for (int pass = 0; pass < 3; ++pass) {
        Mat6 MtM = Mat6::Zero();
        Eigen::Matrix<double, 6, 2> MtY = Eigen::Matrix<double, 6, 2>::Zero();
        MtM(0, 0) = 1.0; // the vertex itself, at the origin with zero offset
        for (int r = 0; r < n; ++r) {
            const Eigen::Vector2d x = T.transpose() * X[r] / scale;
            const Eigen::Vector2d y = N.transpose() * X[r];
            const double s = X[r].norm() / scale / x.norm();
            const double u = x(0) * s;
            const double w = x(1) * s;
            Vec6 row;
            row << 1.0, x(0), x(1), u * u / 2, u * w, w * w / 2;
            MtM.noalias() += row * row.transpose();
            MtY.noalias() += row * y.transpose();
        }
        const Eigen::LDLT<Mat6> ldlt(MtM);
        const Vec6 D = ldlt.vectorD();
        if (!(D.minCoeff() > 1e-12 * D.maxCoeff())) {
            throw DegenerateNeighborhood("vertex " + std::to_string(v) + ": rank-deficient jet fit");
        }
        coef = ldlt.solve(MtY);
        coef.row(1) /= scale;
        coef.row(2) /= scale;
        coef.bottomRows<3>() /= scale * scale;
        if (pass == 2) {
            break;
        }
        Eigen::Matrix4d G;
        G.leftCols<2>() = T + N * coef.block<2, 2>(1, 0).transpose();
        G.rightCols<2>() = N;
        Eigen::HouseholderQR<Eigen::Matrix4d> hq(G);
        Eigen::Matrix4d Qm = hq.householderQ();
        // keep column orientation of G
        for (int c = 0; c < 4; ++c) {
            if (Qm.col(c).dot(G.col(c)) < 0) {
                Qm.col(c) *= -1;
            }
        }
        T = Qm.leftCols<2>();
        N = Qm.rightCols<2>();
    }
    JetFit out;
    out.tangent = T;
    out.normal = N;
    Eigen::Matrix2d A1;
    Eigen::Matrix2d A2;
    A1 << coef(3, 0), coef(4, 0), coef(4, 0), coef(5, 0);
    A2 << coef(3, 1), coef(4, 1), coef(4, 1), coef(5, 1);
    out.shape = ShapeTensor::fromComponents(A1, A2);
    return out;
}

/// Orients the tangent frame along the mesh orientation (using one incident triangle) and
/// makes the full 4×4 frame [T N] positively oriented. Flips keep h_{ijα} consistent.
inline void orientFrame(const SurfaceMesh& m, int v, const Triangle& incident, JetFit& fit) {
    int k = 0;
    while (incident[k] != v) {
        ++k;
    }
    const Vec4 p = m.vertices[incident[(k + 1) % 3]] - m.vertices[v];
    const Vec4 q = m.vertices[incident[(k + 2) % 3]] - m.vertices[v];
    const Eigen::Vector2d pp = fit.tangent.transpose() * p;
    const Eigen::Vector2d qq = fit.tangent.transpose() * q;
    Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
    Eigen::Matrix2d Q = Eigen::Matrix2d::Identity();
    if (pp.x() * qq.y() - pp.y() * qq.x() < 0) {
        fit.tangent.col(1) *= -1;
        P(1, 1) = -1;
    }
    Eigen::Matrix4d F;
    F << fit.tangent, fit.normal;
    if (F.determinant() < 0) {
        fit.normal.col(1) *= -1;
        Q(1, 1) = -1;
    }
    fit.shape = changeFrame(fit.shape, P, Q);
}

/// Fills every per-vertex cache: mixed area, cotan H, jet-fit frame and shape tensor, scalars.
inline void recoverGeometry(SurfaceMesh& m, const RecoverOptions& opt = {}) {
    const Topology& top = topologyOf(m, opt.allowBoundary);
    const auto area = mixedAreas(m);
    const auto H = cotanMeanCurvature(m, area);
    std::vector<VertexGeometry> geo(m.vertices.size());
    detail::parallelFor(m.vertices.size(), opt.jobs, [&](std::size_t i) {
        const int v = static_cast<int>(i);
        auto& g = geo[i];
        g.area = area[i];
        g.meanCurvature = H[i];
        JetFit fit;
        try {
            fit = fitJet(m, v, top.twoRing[i]);
        } catch (const DegenerateNeighborhood&) {
            if (!opt.allowBoundary) {
                throw;
            }
            // open patches: corners and edges keep NaN curvature
            const double nan = std::numeric_limits<double>::quiet_NaN();
            g.tangent.setConstant(nan);
            g.normal.setConstant(nan);
            g.scalars = {nan, nan, nan, nan, nan, nan, nan, nan};
            return;
        }
        orientFrame(m, v, m.triangles[static_cast<std::size_t>(top.incidentTriangle[i])], fit);
        g.tangent = fit.tangent;
        g.normal = fit.normal;
        g.shape = fit.shape;
        g.scalars = tensorScalars(fit.shape);
        if (fit.shape.H.norm() > kTolH) {
            g.state = toSpecialFrame(fit.shape);
        }
    });
    m.geometry = std::move(geo);
}

/// Jet-fit mean curvature vector in R⁴.
inline Vec4 jetMeanCurvature(const VertexGeometry& g) { return g.normal * g.shape.H; }

/// Least-squares tangential gradient of a vertex scalar over the 1-ring, in the vertex frame.
inline Eigen::Vector2d scalarGradient(const SurfaceMesh& m, const Topology& top, int v,
                                     const std::vector<double>& field) {
    const auto& T = m.geometry[v].tangent;
    Eigen::Matrix2d DtD = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Dty = Eigen::Vector2d::Zero();
    for (int w : top.oneRing[static_cast<std::size_t>(v)]) {
        const Eigen::Vector2d d = T.transpose() * (m.vertices[w] - m.vertices[v]);
        DtD.noalias() += d * d.transpose();
        Dty += d * (field[w] - field[v]);
    }
    return DtD.ldlt().solve(Dty);
}

/// Neighbor w's shape tensor transported into the frame of v: tangent and normal frames are
/// aligned by the polar factors of the projected bases.
inline ShapeTensor transportShape(const SurfaceMesh& m, int w, int v) {
    const auto& gw = m.geometry[w];
    const auto& gv = m.geometry[v];
    const Eigen::Matrix2d P = detail::polar(gw.tangent.transpose() * gv.tangent);
    const Eigen::Matrix2d Q = detail::polar(gw.normal.transpose() * gv.normal);
    return changeFrame(gw.shape, P, Q);
}

/// ∇_q h_{ijα} at v from a least-squares fit of transported neighbor tensors over the 1-ring.
/// Returned as grad[alpha](q, 3 packed components (11, 12, 22)).
inline std::array<Eigen::Matrix<double, 2, 3>, 2> shapeGradient(const SurfaceMesh& m, const Topology& top, int v) {
    const auto& gv = m.geometry[v];
    Eigen::Matrix2d DtD = Eigen::Matrix2d::Zero();
    Eigen::Matrix<double, 2, 6> DtY = Eigen::Matrix<double, 2, 6>::Zero();
    for (int w : top.oneRing[static_cast<std::size_t>(v)]) {
        const Eigen::Vector2d d = gv.tangent.transpose() * (m.vertices[w] - m.vertices[v]);
        const ShapeTensor t = transportShape(m, w, v);
        Eigen::Matrix<double, 1, 6> y;
        for (int al = 0; al < 2; ++al) {
            const Eigen::Matrix2d diff = t.A[al] - gv.shape.A[al];
            y(3 * al + 0) = diff(0, 0);
            y(3 * al + 1) = diff(0, 1);
            y(3 * al + 2) = diff(1, 1);
        }
        DtD.noalias() += d * d.transpose();
        DtY.noalias() += d * y;
    }
    const Eigen::Matrix<double, 2, 6> G = DtD.ldlt().solve(DtY);
    std::array<Eigen::Matrix<double, 2, 3>, 2> out;
    out[0] = G.leftCols<3>();
    out[1] = G.rightCols<3>();
    return out;
}

/// |∇A|² = Σ_{q,i,j,α} (∇_q h_{ijα})² from shapeGradient.
inline double normGradA2(const std::array<Eigen::Matrix<double, 2, 3>, 2>& g) {
    double s = 0.0;
    for (int al = 0; al < 2; ++al) {
        s += g[al].col(0).squaredNorm() + 2 * g[al].col(1).squaredNorm() + g[al].col(2).squaredNorm();
    }
    return s;
}

} // namespace mcf4
