#pragma once

// First covariant derivative of the second fundamental form in flat R^4.
//
// Codazzi makes nabla_i h_{jk alpha} totally symmetric, so for each normal direction only
// four components are independent, indexed by how many tangent indices equal 2:
//   x[0] = T_111, x[1] = T_112, x[2] = T_122, x[3] = T_222.

#include <array>
#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "mcf4/curvature.hpp"

namespace mcf4 {

struct GradientState {
    std::array<double, 4> u{}; // alpha = 1
    std::array<double, 4> v{}; // alpha = 2

    const std::array<double, 4>& direction(int alpha) const { return alpha == 0 ? u : v; }
    std::array<double, 4>& direction(int alpha) { return alpha == 0 ? u : v; }

    /// nabla_q h_{ij alpha}, tangent indices 0-based.
    double operator()(int q, int i, int j, int alpha) const {
        return direction(alpha)[static_cast<std::size_t>(q + i + j)];
    }
};

namespace detail {
inline constexpr std::array<double, 4> kMultiplicity{1.0, 3.0, 3.0, 1.0};
}

/// <g1, g2> as full 2x2x2x2 tensors.
inline double inner(const GradientState& g1, const GradientState& g2) {
    double s = 0.0;
    for (int al = 0; al < 2; ++al) {
        for (std::size_t m = 0; m < 4; ++m) {
            s += detail::kMultiplicity[m] * g1.direction(al)[m] * g2.direction(al)[m];
        }
    }
    return s;
}

inline double normGradA2(const GradientState& g) { return inner(g, g); }

/// nabla_i H_alpha = sum_k nabla_i h_{kk alpha}.
inline Eigen::Vector2d gradH(const GradientState& g, int alpha) {
    const auto& x = g.direction(alpha);
    return {x[0] + x[2], x[1] + x[3]};
}

inline double normGradH2(const GradientState& g) {
    return gradH(g, 0).squaredNorm() + gradH(g, 1).squaredNorm();
}

struct EFDecomposition {
    GradientState E; // (1/4)(g_ij nabla_k H + g_ik nabla_j H + g_jk nabla_i H)
    GradientState F; // trace-free remainder
};

inline EFDecomposition decomposeEF(const GradientState& g) {
    EFDecomposition out;
    for (int al = 0; al < 2; ++al) {
        const Eigen::Vector2d dH = gradH(g, al);
        auto& e = out.E.direction(al);
        e = {0.75 * dH(0), 0.25 * dH(1), 0.25 * dH(0), 0.75 * dH(1)};
        auto& f = out.F.direction(al);
        for (std::size_t m = 0; m < 4; ++m) {
            f[m] = g.direction(al)[m] - e[m];
        }
    }
    return out;
}

/// sum_{p,q} (nabla_q h_{1p1} nabla_q h_{2p2} - nabla_q h_{2p1} nabla_q h_{1p2}) with Codazzi
/// symmetry applied.
inline double nablaEvolKperp(const GradientState& g) {
    const auto& u = g.u;
    const auto& v = g.v;
    return u[0] * v[1] - v[0] * u[1] + 2 * u[1] * v[2] - 2 * u[2] * v[1] + u[2] * v[3] - v[2] * u[3];
}

struct GradientSlacks {
    double slack8a = 0.0; // |∇A|² - (3/4)|∇H|²
    double slack8b = 0.0; // |∇A|² - (1/2)|∇H|² - (1/3)|∇A|²
    double slack8c = 0.0; // |∇A|² - 2 ∇_evol K⊥
    double scale = 0.0;   // |∇A|², for relative tolerances
};

inline GradientSlacks checkGradientInequalities(const GradientState& g) {
    constexpr double n = 2.0;
    const double gA = normGradA2(g);
    const double gH = normGradH2(g);
    GradientSlacks s;
    s.slack8a = gA - 3.0 / (n + 2.0) * gH;
    s.slack8b = gA - gH / n - 2.0 * (n - 1.0) / (3.0 * n) * gA;
    s.slack8c = gA - 2.0 * nablaEvolKperp(g);
    s.scale = gA;
    return s;
}

/// nabla_q K⊥ from differentiating K⊥ = sum_p (h_{1p1} h_{2p2} - h_{2p1} h_{1p2}) with
/// h in the special frame of s.
inline Eigen::Vector2d gradKperp(const SpecialFrameState& s, const GradientState& g) {
    const ShapeTensor t = lift(s);
    Eigen::Vector2d out = Eigen::Vector2d::Zero();
    for (int q = 0; q < 2; ++q) {
        double d = 0.0;
        for (int p = 0; p < 2; ++p) {
            d += g(q, 0, p, 0) * t(1, p, 1) + t(0, p, 0) * g(q, 1, p, 1) - g(q, 1, p, 0) * t(0, p, 1) -
                 t(1, p, 0) * g(q, 0, p, 1);
        }
        out(q) = d;
    }
    return out;
}

/// (|∇K⊥|, 4|Å||∇A|).
inline std::pair<double, double> gradKperpBound(const SpecialFrameState& s, const GradientState& g) {
    const double lhs = gradKperp(s, g).norm();
    const double rhs = 4.0 * std::sqrt(scalars(s).normAcirc2) * std::sqrt(normGradA2(g));
    return {lhs, rhs};
}

/// Matrix of the quadratic form g -> |∇A|² - 2∇_evol K⊥ in the coordinates (u, v).
inline Eigen::Matrix<double, 8, 8> slack8cForm() {
    Eigen::Matrix<double, 8, 8> M = Eigen::Matrix<double, 8, 8>::Zero();
    for (int m = 0; m < 4; ++m) {
        M(m, m) = detail::kMultiplicity[static_cast<std::size_t>(m)];
        M(4 + m, 4 + m) = detail::kMultiplicity[static_cast<std::size_t>(m)];
    }
    auto addCross = [&M](int i, int j, double coef) {
        // -2 * coef * x_i x_j, split symmetrically
        M(i, j) -= coef;
        M(j, i) -= coef;
    };
    constexpr int U = 0;
    constexpr int V = 4;
    addCross(U + 0, V + 1, 1.0);
    addCross(V + 0, U + 1, -1.0);
    addCross(U + 1, V + 2, 2.0);
    addCross(U + 2, V + 1, -2.0);
    addCross(U + 2, V + 3, 1.0);
    addCross(V + 2, U + 3, -1.0);
    return M;
}

/// Exact minimum of the (8c) slack over the Euclidean unit sphere of (u, v).
inline double minSlack8cEigen() {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 8, 8>> es(slack8cForm());
    return es.eigenvalues().minCoeff();
}

} // namespace mcf4
