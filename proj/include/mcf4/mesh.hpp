#pragma once

// Closed triangle meshes immersed in R⁴, their topology, builders and file formats.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mcf4/curvature.hpp"
#include "mcf4/errors.hpp"
#include "mcf4/format.hpp"

namespace mcf4 {

using Vec4 = Eigen::Vector4d;
using Frame42 = Eigen::Matrix<double, 4, 2>;
using Triangle = std::array<int, 3>;

/// Per-vertex quantities filled by recoverGeometry.
struct VertexGeometry {
    double area = 0.0;   // mixed Voronoi area
    Vec4 meanCurvature;  // cotan Laplacian of the position
    Frame42 tangent;     // orthonormal columns
    Frame42 normal;      // orthonormal columns, orthogonal to tangent
    ShapeTensor shape;   // jet-fit h_{ijα} in (tangent, normal)
    CurvatureScalars scalars;
    std::optional<SpecialFrameState> state; // empty where |H| is at the reduction tolerance
};

struct Topology;

struct SurfaceMesh {
    std::vector<Vec4> vertices;
    std::vector<Triangle> triangles;
    std::vector<VertexGeometry> geometry; // empty until recovered
    /// Cached connectivity, shared between copies; reset whenever triangles change.
    std::shared_ptr<const Topology> topology;

    std::size_t vertexCount() const { return vertices.size(); }
    bool hasGeometry() const { return geometry.size() == vertices.size(); }
    void invalidate() { geometry.clear(); }
};

struct Topology {
    std::vector<std::vector<int>> oneRing;
    std::vector<std::vector<int>> twoRing; // distance 1 or 2, sorted, without the vertex
    std::vector<int> incidentTriangle;
    std::size_t edgeCount = 0;
    std::size_t boundaryEdges = 0;
    int euler = 0;
};

/// Edge incidence, manifoldness and orientation. With allowBoundary the mesh may have
/// edges with a single triangle (open patches); otherwise every edge needs exactly two,
/// traversed in opposite directions.
inline Topology buildTopology(const SurfaceMesh& m, bool allowBoundary = false) {
    const int n = static_cast<int>(m.vertices.size());
    std::map<std::pair<int, int>, std::array<int, 2>> edges; // (min, max) -> count of (i->j), (j->i)
    for (std::size_t f = 0; f < m.triangles.size(); ++f) {
        const auto& t = m.triangles[f];
        for (int e = 0; e < 3; ++e) {
            const int i = t[e];
            const int j = t[(e + 1) % 3];
            if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
                throw NonManifoldMesh("triangle " + std::to_string(f) + " has an invalid vertex index");
            }
            auto& c = edges[{std::min(i, j), std::max(i, j)}];
            ++c[i < j ? 0 : 1];
        }
    }
    Topology top;
    top.oneRing.assign(static_cast<std::size_t>(n), {});
    for (const auto& [key, c] : edges) {
        const int total = c[0] + c[1];
        if (total == 1 && allowBoundary) {
            ++top.boundaryEdges;
        } else if (total != 2) {
            throw NonManifoldMesh("edge (" + std::to_string(key.first) + ", " + std::to_string(key.second) + ") has " +
                                  std::to_string(total) + " incident triangles");
        } else if (c[0] != 1) {
            throw NonManifoldMesh("edge (" + std::to_string(key.first) + ", " + std::to_string(key.second) +
                                  ") is traversed twice in the same direction; mesh is not consistently oriented");
        }
        top.oneRing[static_cast<std::size_t>(key.first)].push_back(key.second);
        top.oneRing[static_cast<std::size_t>(key.second)].push_back(key.first);
    }
    for (int v = 0; v < n; ++v) {
        if (top.oneRing[static_cast<std::size_t>(v)].empty()) {
            throw NonManifoldMesh("vertex " + std::to_string(v) + " is isolated");
        }
    }
    top.twoRing.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        auto& out = top.twoRing[static_cast<std::size_t>(v)];
        for (int w : top.oneRing[static_cast<std::size_t>(v)]) {
            out.push_back(w);
            for (int x : top.oneRing[static_cast<std::size_t>(w)]) {
                if (x != v) {
                    out.push_back(x);
                }
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
    }
    top.incidentTriangle.assign(static_cast<std::size_t>(n), -1);
    for (std::size_t f = 0; f < m.triangles.size(); ++f) {
        for (int v : m.triangles[f]) {
            if (top.incidentTriangle[static_cast<std::size_t>(v)] < 0) {
                top.incidentTriangle[static_cast<std::size_t>(v)] = static_cast<int>(f);
            }
        }
    }
    top.edgeCount = edges.size();
    top.euler = n - static_cast<int>(edges.size()) + static_cast<int>(m.triangles.size());
    return top;
}

/// Cached topology of m, built on first use.
inline const Topology& topologyOf(SurfaceMesh& m, bool allowBoundary = false) {
    if (!m.topology) {
        m.topology = std::make_shared<const Topology>(buildTopology(m, allowBoundary));
    }
    return *m.topology;
}

inline double triangleArea(const SurfaceMesh& m, const Triangle& t) {
    const Vec4 e1 = m.vertices[t[1]] - m.vertices[t[0]];
    const Vec4 e2 = m.vertices[t[2]] - m.vertices[t[0]];
    const double g = e1.squaredNorm() * e2.squaredNorm() - std::pow(e1.dot(e2), 2);
    return 0.5 * std::sqrt(std::max(0.0, g));
}

inline double totalArea(const SurfaceMesh& m) {
    double s = 0.0;
    for (const auto& t : m.triangles) {
        s += triangleArea(m, t);
    }
    return s;
}

/// Smallest interior angle over all triangles, in degrees.
inline double minAngleDegrees(const SurfaceMesh& m) {
    double best = 180.0;
    for (const auto& t : m.triangles) {
        for (int k = 0; k < 3; ++k) {
            const Vec4 u = m.vertices[t[(k + 1) % 3]] - m.vertices[t[k]];
            const Vec4 w = m.vertices[t[(k + 2) % 3]] - m.vertices[t[k]];
            const double c = u.dot(w) / (u.norm() * w.norm());
            best = std::min(best, std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi);
        }
    }
    return best;
}

inline Vec4 centroid(const SurfaceMesh& m) {
    Vec4 c = Vec4::Zero();
    for (const auto& v : m.vertices) {
        c += v;
    }
    return c / static_cast<double>(m.vertices.size());
}

// ---- builders -------------------------------------------------------------------------

/// Subdivided icosahedron on the sphere of radius r in R³ × {0}.
inline SurfaceMesh icosphere(double r, int subdivisions) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> V = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                                      {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    std::vector<Triangle> F = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                               {3, 8, 9},   {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (auto& v : V) {
        v.normalize();
    }
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int i, int j) {
            const auto key = std::make_pair(std::min(i, j), std::max(i, j));
            auto it = mid.find(key);
            if (it != mid.end()) {
                return it->second;
            }
            V.push_back((V[i] + V[j]).normalized());
            const int id = static_cast<int>(V.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<Triangle> G;
        G.reserve(F.size() * 4);
        for (const auto& t : F) {
            const int a = midpoint(t[0], t[1]);
            const int b = midpoint(t[1], t[2]);
            const int c = midpoint(t[2], t[0]);
            G.push_back({t[0], a, c});
            G.push_back({t[1], b, a});
            G.push_back({t[2], c, b});
            G.push_back({a, b, c});
        }
        F = std::move(G);
    }
    SurfaceMesh m;
    m.triangles = std::move(F);
    m.vertices.reserve(V.size());
    for (const auto& v : V) {
        m.vertices.emplace_back(r * v.x(), r * v.y(), r * v.z(), 0.0);
    }
    return m;
}

/// Ellipsoid with semi-axes (a1, a2, a3) plus a fourth-coordinate bump
/// w = (eps4 / 2) Im((x + i y)^harmonic) in unit-sphere coordinates; harmonic = 2 gives w = eps4·x·y.
inline SurfaceMesh ellipsoidPlusBump(double a1, double a2, double a3, double eps4, int subdivisions, int harmonic = 2) {
    SurfaceMesh m = icosphere(1.0, subdivisions);
    for (auto& v : m.vertices) {
        const std::complex<double> z(v.x(), v.y());
        const double w = 0.5 * eps4 * std::pow(z, harmonic).imag();
        v = Vec4(a1 * v.x(), a2 * v.y(), a3 * v.z(), w);
    }
    return m;
}

/// S¹(r1) × S¹(r2) ⊂ R² × R² on an n1 × n2 grid.
inline SurfaceMesh productTorus(double r1, double r2, int n1, int n2) {
    SurfaceMesh m;
    for (int i = 0; i < n1; ++i) {
        const double u = 2 * std::numbers::pi * i / n1;
        for (int j = 0; j < n2; ++j) {
            const double v = 2 * std::numbers::pi * j / n2;
            m.vertices.emplace_back(r1 * std::cos(u), r1 * std::sin(u), r2 * std::cos(v), r2 * std::sin(v));
        }
    }
    auto id = [&](int i, int j) { return ((i + n1) % n1) * n2 + (j + n2) % n2; };
    for (int i = 0; i < n1; ++i) {
        for (int j = 0; j < n2; ++j) {
            m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    return m;
}

/// Torus of revolution in R³ × {0}: tube radius r about a circle of radius R (R > r).
inline SurfaceMesh revolutionTorus(double R, double r, int n1, int n2) {
    SurfaceMesh m = productTorus(1.0, 1.0, n1, n2);
    for (int i = 0; i < n1; ++i) {
        const double u = 2 * std::numbers::pi * i / n1;
        for (int j = 0; j < n2; ++j) {
            const double v = 2 * std::numbers::pi * j / n2;
            const double rho = R + r * std::cos(v);
            m.vertices[i * n2 + j] = Vec4(rho * std::cos(u), rho * std::sin(u), r * std::sin(v), 0.0);
        }
    }
    return m;
}

/// Flat n × n grid patch with spacing h in the (x1, x2) plane (open mesh).
inline SurfaceMesh planarPatch(int n, double h) {
    SurfaceMesh m;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            m.vertices.emplace_back(h * i, h * j, 0.0, 0.0);
        }
    }
    for (int i = 0; i + 1 < n; ++i) {
        for (int j = 0; j + 1 < n; ++j) {
            const int a = i * n + j;
            m.triangles.push_back({a, a + n, a + n + 1});
            m.triangles.push_back({a, a + n + 1, a + 1});
        }
    }
    return m;
}

// ---- I/O ------------------------------------------------------------------------------

/// OFF with four coordinates per vertex line and an "OFF4" header.
inline void writeOff4(std::ostream& os, const SurfaceMesh& m) {
    os << "OFF4\n" << m.vertices.size() << ' ' << m.triangles.size() << " 0\n";
    for (const auto& v : m.vertices) {
        os << fmt(v[0]) << ' ' << fmt(v[1]) << ' ' << fmt(v[2]) << ' ' << fmt(v[3]) << '\n';
    }
    for (const auto& t : m.triangles) {
        os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
}

inline SurfaceMesh readOff4(std::istream& is) {
    auto fail = [](const std::string& what) { throw ConfigError("OFF4: " + what); };
    std::string line;
    auto nextLine = [&]() -> std::string {
        while (std::getline(is, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                return line;
            }
        }
        fail("unexpected end of file");
        return {};
    };
    std::string header = nextLine();
    header.erase(header.find_last_not_of(" \t\r") + 1);
    if (header != "OFF4") {
        fail("expected header OFF4, got '" + header + "'");
    }
    std::size_t nv = 0;
    std::size_t nf = 0;
    {
        std::istringstream ss(nextLine());
        if (!(ss >> nv >> nf)) {
            fail("bad count line");
        }
    }
    SurfaceMesh m;
    m.vertices.resize(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        std::istringstream ss(nextLine());
        for (int k = 0; k < 4; ++k) {
            if (!(ss >> m.vertices[i][k])) {
                fail("vertex " + std::to_string(i) + " needs four coordinates");
            }
        }
    }
    m.triangles.resize(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        std::istringstream ss(nextLine());
        int count = 0;
        auto& t = m.triangles[f];
        if (!(ss >> count >> t[0] >> t[1] >> t[2]) || count != 3) {
            fail("face " + std::to_string(f) + " is not a triangle");
        }
        for (int v : t) {
            if (v < 0 || static_cast<std::size_t>(v) >= nv) {
                fail("face " + std::to_string(f) + " references vertex " + std::to_string(v) + " of " + std::to_string(nv));
            }
        }
    }
    return m;
}

inline void writeOff4(const std::string& path, const SurfaceMesh& m) {
    std::ofstream os(path);
    if (!os) {
        throw ConfigError("cannot write " + path);
    }
    writeOff4(os, m);
}

inline SurfaceMesh readOff4(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw ConfigError("cannot read " + path);
    }
    return readOff4(is);
}

inline nlohmann::json toJson(const SurfaceMesh& m) {
    nlohmann::json j;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : m.vertices) {
        j["vertices"].push_back({v[0], v[1], v[2], v[3]});
    }
    j["triangles"] = m.triangles;
    return j;
}

} // namespace mcf4
