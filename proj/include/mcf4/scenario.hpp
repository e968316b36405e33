#pragma once

// Scenario files: flat "key = value" sections, or the same keys as a JSON object.
//
//   name = pinched_ellipsoid
//   seed = 42
//   [surface]
//   builder = ellipsoid_bump      # icosphere | ellipsoid_bump | product_torus | off4
//   axes = 1.2 1 0.9
//   [flow]
//   k = 0.725
//   [certify]
//   k = 0.725
//   [output]
//   dir = out/pinched_ellipsoid

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcf4/certifier.hpp"
#include "mcf4/errors.hpp"
#include "mcf4/flow.hpp"
#include "mcf4/mesh.hpp"

namespace mcf4 {

struct SurfaceSpec {
    std::string builder = "icosphere";
    double radius = 1.0;
    int subdivisions = 4;
    std::array<double, 3> axes{1.2, 1.0, 0.9};
    double eps4 = 0.1;
    int harmonic = 2;
    double r1 = 1.0;
    double r2 = 1.0;
    int n1 = 64;
    int n2 = 64;
    std::string path;
};

struct CertifySpec {
    double k = 29.0 / 40.0;
    double delta = 0.0;
    GridSpec grid;
};

struct Scenario {
    std::string name = "unnamed";
    std::uint64_t seed = 42;
    SurfaceSpec surface;
    FlowConfig flow;
    CertifySpec certify;
    std::string outputDir;
};

inline SurfaceMesh buildSurface(const SurfaceSpec& s) {
    if (s.builder == "icosphere") {
        return icosphere(s.radius, s.subdivisions);
    }
    if (s.builder == "ellipsoid_bump") {
        return ellipsoidPlusBump(s.axes[0], s.axes[1], s.axes[2], s.eps4, s.subdivisions, s.harmonic);
    }
    if (s.builder == "product_torus") {
        return productTorus(s.r1, s.r2, s.n1, s.n2);
    }
    if (s.builder == "off4") {
        return readOff4(s.path);
    }
    throw ConfigError("surface.builder: unknown builder '" + s.builder + "'");
}

namespace detail {

struct RawEntry {
    std::string value;
    std::string where; // "line 12" or a JSON path
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parseDouble(const std::string& key, const RawEntry& e) {
    double x = 0.0;
    const char* first = e.value.data();
    const char* last = first + e.value.size();
    auto [p, ec] = std::from_chars(first, last, x);
    if (ec != std::errc() || p != last) {
        throw ConfigError(e.where + ": key '" + key + "': expected a number, got '" + e.value + "'");
    }
    return x;
}

inline long parseLong(const std::string& key, const RawEntry& e) {
    const double x = parseDouble(key, e);
    if (x != std::floor(x)) {
        throw ConfigError(e.where + ": key '" + key + "': expected an integer, got '" + e.value + "'");
    }
    return static_cast<long>(x);
}

/// Applies raw entries (keys "section.key") to a scenario.
inline void applyEntries(Scenario& sc, const std::map<std::string, RawEntry>& raw) {
    using Setter = std::function<void(const std::string&, const RawEntry&)>;
    auto num = [](double& dst) { return Setter([&dst](const std::string& k, const RawEntry& e) { dst = parseDouble(k, e); }); };
    auto integer = [](auto& dst) {
        return Setter([&dst](const std::string& k, const RawEntry& e) {
            dst = static_cast<std::remove_reference_t<decltype(dst)>>(parseLong(k, e));
        });
    };
    auto str = [](std::string& dst) { return Setter([&dst](const std::string&, const RawEntry& e) { dst = e.value; }); };

    std::map<std::string, Setter> setters = {
        {"name", str(sc.name)},
        {"seed", Setter([&](const std::string& k, const RawEntry& e) {
             const long v = parseLong(k, e);
             if (v < 0) {
                 throw ConfigError(e.where + ": key 'seed': must be non-negative");
             }
             sc.seed = static_cast<std::uint64_t>(v);
         })},
        {"surface.builder", str(sc.surface.builder)},
        {"surface.radius", num(sc.surface.radius)},
        {"surface.subdivisions", integer(sc.surface.subdivisions)},
        {"surface.axes", Setter([&](const std::string& k, const RawEntry& e) {
             std::istringstream ss(e.value);
             std::array<std::string, 3> parts;
             std::string extra;
             if (!(ss >> parts[0] >> parts[1] >> parts[2]) || (ss >> extra)) {
                 throw ConfigError(e.where + ": key '" + k + "': expected three numbers");
             }
             for (int i = 0; i < 3; ++i) {
                 sc.surface.axes[i] = parseDouble(k, {parts[i], e.where});
             }
         })},
        {"surface.eps4", num(sc.surface.eps4)},
        {"surface.harmonic", integer(sc.surface.harmonic)},
        {"surface.r1", num(sc.surface.r1)},
        {"surface.r2", num(sc.surface.r2)},
        {"surface.n1", integer(sc.surface.n1)},
        {"surface.n2", integer(sc.surface.n2)},
        {"surface.path", str(sc.surface.path)},
        {"flow.k", num(sc.flow.k)},
        {"flow.gamma", Setter([&](const std::string& k, const RawEntry& e) { sc.flow.gammaOverride = parseDouble(k, e); })},
        {"flow.eps", num(sc.flow.eps)},
        {"flow.sigma", num(sc.flow.sigma)},
        {"flow.p", num(sc.flow.p)},
        {"flow.eta", num(sc.flow.eta)},
        {"flow.cfl", num(sc.flow.cfl)},
        {"flow.stop_a2", num(sc.flow.stopA2)},
        {"flow.stop_factor", num(sc.flow.stopFactor)},
        {"flow.max_steps", integer(sc.flow.maxSteps)},
        {"flow.output_every", integer(sc.flow.outputEvery)},
        {"flow.max_halvings", integer(sc.flow.maxHalvings)},
        {"flow.min_angle", num(sc.flow.minAngleDeg)},
        {"flow.jobs", integer(sc.flow.jobs)},
        {"certify.k", num(sc.certify.k)},
        {"certify.delta", num(sc.certify.delta)},
        {"certify.gamma", Setter([&](const std::string& k, const RawEntry& e) {
             sc.certify.grid.gammaOverride = parseDouble(k, e);
         })},
        {"certify.eps", num(sc.certify.grid.eps)},
        {"certify.resolution", integer(sc.certify.grid.sphereResolution)},
        {"certify.random", integer(sc.certify.grid.randomSamples)},
        {"output.dir", str(sc.outputDir)},
    };
    for (const auto& [key, entry] : raw) {
        auto it = setters.find(key);
        if (it == setters.end()) {
            throw ConfigError(entry.where + ": unknown key '" + key + "'");
        }
        it->second(key, entry);
    }
    sc.certify.grid.seed = sc.seed;
    try {
        sc.flow.validate();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        const auto it = raw.find(msg.substr(0, msg.find(' ')));
        throw ConfigError((it != raw.end() ? it->second.where + ": " : std::string()) + msg);
    }
}

} // namespace detail

/// Parses the key = value format. Errors carry the line number and key.
inline Scenario parseScenarioText(const std::string& text) {
    std::map<std::string, detail::RawEntry> raw;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const std::string where = "line " + std::to_string(lineNo);
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(where + ": malformed section header '" + line + "'");
            }
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(where + ": empty key");
        }
        const std::string full = section.empty() ? key : section + "." + key;
        if (raw.count(full)) {
            throw ConfigError(where + ": duplicate key '" + full + "' (first at " + raw[full].where + ")");
        }
        raw[full] = {value, where};
    }
    Scenario sc;
    detail::applyEntries(sc, raw);
    return sc;
}

/// JSON alternative: {"name": ..., "surface": {...}, "flow": {...}, ...} with the same keys.
inline Scenario parseScenarioJson(const nlohmann::json& j) {
    std::map<std::string, detail::RawEntry> raw;
    auto scalarText = [](const nlohmann::json& v) {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_array()) {
            std::string s;
            for (const auto& x : v) {
                s += (s.empty() ? "" : " ") + x.dump();
            }
            return s;
        }
        return v.dump();
    };
    if (!j.is_object()) {
        throw ConfigError("scenario JSON must be an object");
    }
    for (const auto& [k, v] : j.items()) {
        if (v.is_object()) {
            for (const auto& [k2, v2] : v.items()) {
                raw[k + "." + k2] = {scalarText(v2), "json /" + k + "/" + k2};
            }
        } else {
            raw[k] = {scalarText(v), "json /" + k};
        }
    }
    Scenario sc;
    detail::applyEntries(sc, raw);
    return sc;
}

inline const std::map<std::string, std::string>& builtinScenarios() {
    static const std::map<std::string, std::string> s = {
        {"sphere_r1", R"(name = sphere_r1
[surface]
builder = icosphere
radius = 1
subdivisions = 4
[flow]
k = 0.725
cfl = 0.1
stop_factor = 30
)"},
        {"clifford_r1", R"(name = clifford_r1
[surface]
builder = product_torus
r1 = 1
r2 = 1
n1 = 64
n2 = 64
[flow]
k = 0.725
cfl = 0.2
stop_factor = 12.5
)"},
        {"pinched_ellipsoid", R"(name = pinched_ellipsoid
[surface]
builder = ellipsoid_bump
axes = 1.2 1 0.9
eps4 = 0.1
harmonic = 2
subdivisions = 4
[flow]
k = 0.725
cfl = 0.2
stop_factor = 10000
sigma = 0.05
p = 10
)"},
    };
    return s;
}

/// A built-in scenario name, a .json file, or a key = value file.
inline Scenario loadScenario(const std::string& nameOrPath) {
    const auto& builtins = builtinScenarios();
    if (auto it = builtins.find(nameOrPath); it != builtins.end()) {
        return parseScenarioText(it->second);
    }
    std::ifstream is(nameOrPath);
    if (!is) {
        throw ConfigError("no built-in scenario or readable file named '" + nameOrPath + "'");
    }
    std::stringstream ss;
    ss << is.rdbuf();
    const std::string text = ss.str();
    if (nameOrPath.size() >= 5 && nameOrPath.substr(nameOrPath.size() - 5) == ".json") {
        try {
            return parseScenarioJson(nlohmann::json::parse(text));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(nameOrPath + ": " + e.what());
        }
    }
    try {
        return parseScenarioText(text);
    } catch (const ConfigError& e) {
        throw ConfigError(nameOrPath + ": " + e.what());
    }
}

} // namespace mcf4
