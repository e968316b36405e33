#pragma once

// Pointwise algebra of the second fundamental form of a surface in R^4.
//
// Two representations are used throughout:
//   ShapeTensor        h_{ij alpha} in an arbitrary orthonormal tangent/normal frame;
//   SpecialFrameState  (h, a, b, c) in the frame where nu_1 = H/|H| and A_1 is diagonal,
//                      so that A_1 = diag(h/2 + a, h/2 - a) and A_2 = [[b, c], [c, -b]].
// Closed forms in (h, a, b, c) are the production path; the tensor sums are kept
// alongside as the second route for cross-checking.

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "json.hpp"
#include "mcf4/errors.hpp"

namespace mcf4 {

inline constexpr double kTolH = 1e-12;
inline constexpr double kFrameTolFactor = 1e-9;

struct SpecialFrameState {
    double h = 0.0;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
};

struct ShapeTensor {
    /// A[alpha](i, j) = h_{ij alpha}; each block is symmetric.
    std::array<Eigen::Matrix2d, 2> A{Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()};
    /// H_alpha = trace A[alpha].
    Eigen::Vector2d H = Eigen::Vector2d::Zero();

    /// Symmetrises the blocks and fills H from their traces.
    static ShapeTensor fromComponents(const Eigen::Matrix2d& A1, const Eigen::Matrix2d& A2) {
        ShapeTensor t;
        t.A[0] = 0.5 * (A1 + A1.transpose());
        t.A[1] = 0.5 * (A2 + A2.transpose());
        t.H = Eigen::Vector2d(t.A[0].trace(), t.A[1].trace());
        return t;
    }

    double operator()(int i, int j, int alpha) const { return A[alpha](i, j); }
};

struct CurvatureScalars {
    double normA2 = 0.0;
    double normAcirc2 = 0.0;
    double gaussK = 0.0;
    double normalKperp = 0.0;
    double normRmPerp2 = 0.0;
    double R1 = 0.0;
    double R2 = 0.0;
    double R3 = 0.0;
};

/// Re-expresses t in the frame e'_i = sum_k P(k,i) e_k, nu'_alpha = sum_beta Q(beta,alpha) nu_beta.
/// P and Q must be orthogonal.
inline ShapeTensor changeFrame(const ShapeTensor& t, const Eigen::Matrix2d& P, const Eigen::Matrix2d& Q) {
    ShapeTensor out;
    for (int alpha = 0; alpha < 2; ++alpha) {
        Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
        for (int beta = 0; beta < 2; ++beta) {
            M += Q(beta, alpha) * (P.transpose() * t.A[beta] * P);
        }
        out.A[alpha] = M;
    }
    out.H = Q.transpose() * t.H;
    return out;
}

/// The ShapeTensor whose special-frame components are s.
inline ShapeTensor lift(const SpecialFrameState& s) {
    Eigen::Matrix2d A1;
    A1 << s.h / 2 + s.a, 0.0, 0.0, s.h / 2 - s.a;
    Eigen::Matrix2d A2;
    A2 << s.b, s.c, s.c, -s.b;
    return ShapeTensor::fromComponents(A1, A2);
}

inline SpecialFrameState toSpecialFrame(const ShapeTensor& t) {
    const double hNorm = t.H.norm();
    if (!(hNorm > kTolH)) {
        throw DegenerateMeanCurvature("toSpecialFrame: |H| = " + std::to_string(hNorm) +
                                      " is below the reduction tolerance");
    }
    const Eigen::Vector2d n1 = t.H / hNorm;
    // nu_1 = H/|H|, nu_2 its rotation by +90 degrees in the normal plane.
    const Eigen::Matrix2d A1 = n1(0) * t.A[0] + n1(1) * t.A[1];
    const Eigen::Matrix2d A2 = -n1(1) * t.A[0] + n1(0) * t.A[1];

    // Trace-free parts written as [[p, q], [q, -p]].
    const double p1 = 0.5 * (A1(0, 0) - A1(1, 1));
    const double q1 = 0.5 * (A1(0, 1) + A1(1, 0));
    const double p2 = 0.5 * (A2(0, 0) - A2(1, 1));
    const double q2 = 0.5 * (A2(0, 1) + A2(1, 0));

    const double normA = std::sqrt(t.A[0].squaredNorm() + t.A[1].squaredNorm());
    const double tolFrame = kFrameTolFactor * (normA + hNorm);

    SpecialFrameState s;
    s.h = hNorm;
    const double a = std::hypot(p1, q1);
    if (a < tolFrame) {
        // A_1 umbilic: rotate the tangent frame to diagonalise A_2 instead.
        s.a = 0.0;
        s.b = std::hypot(p2, q2);
        s.c = 0.0;
        return s;
    }
    // Rotating the tangent frame by theta maps (p, q) to
    // (p cos 2theta + q sin 2theta, -p sin 2theta + q cos 2theta); pick 2theta = atan2(q1, p1).
    const double cos2 = p1 / a;
    const double sin2 = q1 / a;
    s.a = a;
    s.b = p2 * cos2 + q2 * sin2;
    s.c = -p2 * sin2 + q2 * cos2;
    if (s.c < 0.0) {
        // flip nu_2
        s.b = -s.b;
        s.c = -s.c;
    }
    return s;
}

inline CurvatureScalars scalars(const SpecialFrameState& s) {
    const double h2 = s.h * s.h;
    const double a2 = s.a * s.a;
    const double b2 = s.b * s.b;
    const double c2 = s.c * s.c;

    CurvatureScalars out;
    out.normAcirc2 = 2 * a2 + 2 * b2 + 2 * c2;
    out.normA2 = h2 / 2 + out.normAcirc2;
    out.gaussK = h2 / 4 - a2 - b2 - c2;
    out.normalKperp = 2 * s.a * s.c;
    out.normRmPerp2 = 16 * a2 * c2;

    const double c11 = h2 / 2 + 2 * a2;
    const double c12 = 2 * s.a * s.b;
    const double c22 = 2 * b2 + 2 * c2;
    out.R1 = c11 * c11 + 2 * c12 * c12 + c22 * c22 + out.normRmPerp2;
    out.R2 = h2 * c11;
    // Reaction term of the K-perp evolution, read off the evolution equation of h.
    out.R3 = out.normalKperp * (out.normA2 + 2 * out.normAcirc2);
    return out;
}

/// The same invariants computed from tensor sums in the frame of t. K-perp keeps its
/// orientation-dependent sign here.
inline CurvatureScalars tensorScalars(const ShapeTensor& t) {
    CurvatureScalars out;
    const double H2 = t.H.squaredNorm();
    double gram[2][2];
    for (int al = 0; al < 2; ++al) {
        for (int be = 0; be < 2; ++be) {
            gram[al][be] = (t.A[al].array() * t.A[be].array()).sum();
        }
    }
    out.normA2 = gram[0][0] + gram[1][1];
    out.normAcirc2 = out.normA2 - H2 / 2;
    out.gaussK = 0.0;
    for (int al = 0; al < 2; ++al) {
        out.gaussK += t.A[al](0, 0) * t.A[al](1, 1) - t.A[al](0, 1) * t.A[al](1, 0);
    }
    double kPerp = 0.0;
    for (int p = 0; p < 2; ++p) {
        kPerp += t(0, p, 0) * t(1, p, 1) - t(1, p, 0) * t(0, p, 1);
    }
    out.normalKperp = kPerp;
    double rm2 = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            for (int al = 0; al < 2; ++al) {
                for (int be = 0; be < 2; ++be) {
                    double r = 0.0;
                    for (int p = 0; p < 2; ++p) {
                        r += t(i, p, al) * t(j, p, be) - t(j, p, al) * t(i, p, be);
                    }
                    rm2 += r * r;
                }
            }
        }
    }
    out.normRmPerp2 = rm2;
    out.R1 = gram[0][0] * gram[0][0] + gram[0][1] * gram[0][1] + gram[1][0] * gram[1][0] +
             gram[1][1] * gram[1][1] + rm2;
    double r2 = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double v = t.H(0) * t(i, j, 0) + t.H(1) * t(i, j, 1);
            r2 += v * v;
        }
    }
    out.R2 = r2;
    out.R3 = kPerp * (out.normA2 + 2 * out.normAcirc2);
    return out;
}

/// Nonlinearity of the contracted Simons identity, from its defining tensor sums.
inline double simonsZTensor(const ShapeTensor& t) {
    double cubic = 0.0;
    for (int al = 0; al < 2; ++al) {
        for (int be = 0; be < 2; ++be) {
            // sum_{i,j,p} H_al h_{ip al} h_{ij be} h_{pj be} = H_al tr(A_al A_be A_be)
            cubic += t.H(al) * (t.A[al] * t.A[be] * t.A[be]).trace();
        }
    }
    const CurvatureScalars ts = tensorScalars(t);
    double quartic = 0.0;
    for (int al = 0; al < 2; ++al) {
        for (int be = 0; be < 2; ++be) {
            const double g = (t.A[al].array() * t.A[be].array()).sum();
            quartic += g * g;
        }
    }
    return cubic - quartic - ts.normRmPerp2;
}

/// Z = 2 K |Å|² - 2 (K⊥)².
inline double simonsZClosed(const SpecialFrameState& s) {
    const CurvatureScalars sc = scalars(s);
    return 2 * sc.gaussK * sc.normAcirc2 - 2 * sc.normalKperp * sc.normalKperp;
}

/// Q = |A|² + 2γ|K⊥| - k|H|² + ε.
inline double pinchQ(const SpecialFrameState& s, double k, double gamma, double eps) {
    const CurvatureScalars sc = scalars(s);
    return sc.normA2 + 2 * gamma * std::abs(sc.normalKperp) - k * s.h * s.h + eps;
}

/// f_σ = (|Å|² + 2γ|K⊥|) / |H|^{2(1-σ)}.
inline double fSigma(const SpecialFrameState& s, double sigma, double gamma) {
    if (!(s.h > kTolH)) {
        throw DegenerateMeanCurvature("fSigma: |H| below tolerance");
    }
    const CurvatureScalars sc = scalars(s);
    return (sc.normAcirc2 + 2 * gamma * std::abs(sc.normalKperp)) / std::pow(s.h, 2 * (1 - sigma));
}

/// Z / ((|Å|² + 2γ|K⊥|)|H|²): the pointwise constant in the lower bound for Z.
inline double zLowerBoundRatio(const SpecialFrameState& s, double gamma) {
    if (!(s.h > kTolH)) {
        throw DegenerateMeanCurvature("zLowerBoundRatio: |H| below tolerance");
    }
    const CurvatureScalars sc = scalars(s);
    const double pinch = sc.normAcirc2 + 2 * gamma * std::abs(sc.normalKperp);
    if (!(pinch > 1e-14 * sc.normA2)) {
        throw UmbilicPoint("zLowerBoundRatio: |Å|² + 2γ|K⊥| vanishes");
    }
    return simonsZClosed(s) / (pinch * s.h * s.h);
}

/// Debug dump used by golden tests: the state and every scalar.
inline nlohmann::json toJson(const SpecialFrameState& s) {
    const CurvatureScalars sc = scalars(s);
    return nlohmann::json{{"h", s.h},
                          {"a", s.a},
                          {"b", s.b},
                          {"c", s.c},
                          {"normA2", sc.normA2},
                          {"normAcirc2", sc.normAcirc2},
                          {"gaussK", sc.gaussK},
                          {"normalKperp", sc.normalKperp},
                          {"normRmPerp2", sc.normRmPerp2},
                          {"R1", sc.R1},
                          {"R2", sc.R2},
                          {"R3", sc.R3},
                          {"Z", simonsZClosed(s)}};
}

} // namespace mcf4
