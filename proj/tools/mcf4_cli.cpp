// mcf4: identities / certify / scan / flow / rescale.
// Exit codes: 0 success, 1 assertion failure, 2 usage or config error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mcf4/certifier.hpp"
#include "mcf4/flow.hpp"
#include "mcf4/identities.hpp"
#include "mcf4/scenario.hpp"

namespace fs = std::filesystem;
using namespace mcf4;

namespace {

constexpr int kOk = 0;
constexpr int kAssert = 1;
constexpr int kUsage = 2;
constexpr int kNumeric = 3;

struct Globals {
    std::uint64_t seed = 42;
    std::string out = "out";
    int jobs = 1;
};

std::ofstream openOut(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) {
        throw ConfigError("cannot write " + p.string());
    }
    return os;
}

void writeJson(const fs::path& p, const nlohmann::json& j) { openOut(p) << j.dump(2) << '\n'; }

std::string indexTag(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu", i);
    return buf;
}

int cmdIdentities(const Globals& g, std::uint64_t count) {
    const auto rep = runIdentitySweeps(g.seed, count);
    const auto j = toJson(rep);
    writeJson(fs::path(g.out) / "identities.json", j);
    std::cout << j.dump(2) << '\n';
    if (!rep.passed()) {
        for (const auto& name : rep.failures()) {
            std::cerr << "FAILED: " << name << '\n';
        }
        return kAssert;
    }
    return kOk;
}

struct CertifyArgs {
    double k = 29.0 / 40.0;
    double delta = 0.0;
    std::optional<double> gamma;
    double eps = 0.0;
    int resolution = 256;
    std::uint64_t random = 1'000'000;
    std::string require;
    std::vector<double> scan;
    double tol = 1e-3;
};

GridSpec gridFrom(const Globals& g, const CertifyArgs& a) {
    GridSpec grid;
    grid.sphereResolution = a.resolution;
    grid.randomSamples = a.random;
    grid.seed = g.seed;
    grid.gammaOverride = a.gamma;
    grid.eps = a.eps;
    grid.jobs = g.jobs;
    return grid;
}

int cmdScan(const Globals& g, const CertifyArgs& a, double lo, double hi) {
    const auto r = thresholdScan(lo, hi, a.tol, gridFrom(g, a));
    nlohmann::json j = {{"kStar", r.kStar}, {"lo", r.lo},   {"hi", r.hi},
                        {"tolK", a.tol},    {"evaluations", r.evaluations}};
    writeJson(fs::path(g.out) / "scan.json", j);
    std::cout << j.dump(2) << '\n';
    return kOk;
}

int cmdCertify(const Globals& g, const CertifyArgs& a) {
    if (!a.scan.empty()) {
        return cmdScan(g, a, a.scan[0], a.scan[1]);
    }
    const auto r = certifyNegativity(a.k, a.delta, gridFrom(g, a));
    writeJson(fs::path(g.out) / "certificate.json", toJson(r));
    {
        auto os = openOut(fs::path(g.out) / "worst.csv");
        writeWorstCsv(os, r);
    }
    std::cout << "k=" << fmt(r.k) << " gamma=" << fmt(r.gamma) << " maxValue=" << fmt(r.maxValue)
              << " at (a,b,c)=(" << fmt(r.argmax.a) << ", " << fmt(r.argmax.b) << ", " << fmt(r.argmax.c)
              << ") samples=" << r.sampleCount << '\n';
    bool ok = true;
    if (a.require == "negative") {
        ok = r.strictlyNegative();
    } else if (a.require == "nonpositive") {
        ok = r.nonPositive();
    } else if (a.require == "positive") {
        ok = r.maxValue > 0.0;
    }
    if (!ok) {
        std::cerr << "FAILED: maxValue " << fmt(r.maxValue) << " is not " << a.require << '\n';
        return kAssert;
    }
    return kOk;
}

int cmdFlow(const Globals& g, const std::string& scenarioName, bool outGiven) {
    Scenario sc = loadScenario(scenarioName);
    sc.flow.jobs = std::max(sc.flow.jobs, g.jobs);
    const fs::path dir = (!outGiven && !sc.outputDir.empty()) ? fs::path(sc.outputDir) : fs::path(g.out) / sc.name;
    fs::create_directories(dir);
    const SurfaceMesh mesh = buildSurface(sc.surface);
    buildTopology(mesh);
    const FlowResult res = runFlow(mesh, sc.flow);

    {
        auto os = openOut(dir / "trace.csv");
        res.trace.writeCsv(os);
    }
    {
        auto os = openOut(dir / "trace.gnuplot");
        res.trace.writeGnuplot(os);
    }
    {
        auto idx = openOut(dir / "snapshots.csv");
        idx << "index,step,t,maxA2,fields,mesh\n";
        for (std::size_t i = 0; i < res.snapshots.size(); ++i) {
            const auto& s = res.snapshots[i];
            const std::string fields = "snapshot_" + indexTag(i) + ".csv";
            const std::string off = "snapshot_" + indexTag(i) + ".off4";
            auto os = openOut(dir / fields);
            writeSnapshotCsv(os, s.mesh, sc.flow);
            writeOff4((dir / off).string(), s.mesh);
            idx << i << ',' << s.step << ',' << fmt(s.t) << ',' << fmt(s.row.maxA2) << ',' << fields << ',' << off
                << '\n';
        }
    }

    const auto& rows = res.trace.rows;
    const FlowRow& first = rows.front();
    double worstMaxQ = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows) {
        worstMaxQ = std::max(worstMaxQ, r.maxQ);
    }
    nlohmann::json summary;
    summary["name"] = sc.name;
    summary["stopReason"] = res.stopReason;
    summary["steps"] = rows.back().step;
    summary["finalT"] = rows.back().t;
    summary["initialMaxA2"] = res.initialMaxA2;
    summary["stopA2"] = res.stopA2;
    summary["epsZ"] = std::isfinite(res.epsZ) ? nlohmann::json(res.epsZ) : nlohmann::json();
    summary["k"] = sc.flow.k;
    summary["gamma"] = sc.flow.gamma();
    summary["initialMaxQ"] = first.maxQ;
    summary["initialMinQ"] = first.minQ;
    summary["hypothesisSatisfied"] = first.maxQ < 0.0;
    summary["maxQOverRun"] = worstMaxQ;
    summary["pinchingPreserved"] = worstMaxQ < 0.05 * std::abs(first.minQ);
    try {
        const auto rescaled = typeIRescale(res.snapshots, res.stopA2, sc.flow.gamma());
        auto os = openOut(dir / "rescale.csv");
        os << "index,step,t,lambda,maxPinch,maxAcirc2\n";
        for (std::size_t i = 0; i < rescaled.size(); ++i) {
            const auto& r = rescaled[i];
            os << i << ',' << r.step << ',' << fmt(r.t) << ',' << fmt(r.lambda) << ',' << fmt(r.maxPinch) << ','
               << fmt(r.maxAcirc2) << '\n';
        }
        summary["rescale"] = "rescale.csv";
    } catch (const NoBlowupDetected& e) {
        summary["rescale"] = e.what();
    }
    try {
        const auto fit = decayExponentFit(res.trace);
        summary["decay"] = {{"c0", fit.c0}, {"delta", fit.delta}, {"samples", fit.samples}, {"degenerate", fit.degenerate}};
    } catch (const InsufficientDynamicRange& e) {
        summary["decay"] = e.what();
    }
    writeJson(dir / "summary.json", summary);
    std::cout << summary.dump(2) << '\n';
    if (!(first.maxQ < 0.0)) {
        std::cerr << "note: maxQ(0) = " << fmt(first.maxQ) << " >= 0: pinching hypothesis violated for k = "
                  << fmt(sc.flow.k) << '\n';
    }
    return kOk;
}

int cmdRescale(const Globals& g, const std::string& flowDir, bool outGiven) {
    const fs::path dir(flowDir);
    std::ifstream sj(dir / "summary.json");
    if (!sj) {
        throw ConfigError("rescale: no summary.json in " + flowDir);
    }
    const auto summary = nlohmann::json::parse(sj);
    FlowConfig cfg;
    cfg.k = summary.at("k").get<double>();
    cfg.gammaOverride = summary.at("gamma").get<double>();
    std::ifstream idx(dir / "snapshots.csv");
    if (!idx) {
        throw ConfigError("rescale: no snapshots.csv in " + flowDir);
    }
    std::string line;
    std::getline(idx, line);
    std::vector<Snapshot> snaps;
    while (std::getline(idx, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != 6) {
            throw ConfigError("rescale: malformed snapshots.csv line '" + line + "'");
        }
        Snapshot s;
        s.step = std::stol(cells[1]);
        s.t = std::stod(cells[2]);
        s.mesh = readOff4((dir / cells[5]).string());
        recoverGeometry(s.mesh, {false, g.jobs});
        const Topology& top = *s.mesh.topology;
        s.row = monitors(s.mesh, top, cfg, s.t, {});
        snaps.push_back(std::move(s));
    }
    const auto rescaled = typeIRescale(snaps, summary.at("stopA2").get<double>(), cfg.gamma());
    const fs::path out = outGiven ? fs::path(g.out) : dir;
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t i = 0; i < rescaled.size(); ++i) {
        const auto& r = rescaled[i];
        auto os = openOut(out / ("rescaled_" + indexTag(i) + ".csv"));
        os << "vertex,x1,x2,x3,x4,acircOverH2\n";
        for (std::size_t v = 0; v < r.positions.size(); ++v) {
            const auto& x = r.positions[v];
            os << v << ',' << fmt(x[0]) << ',' << fmt(x[1]) << ',' << fmt(x[2]) << ',' << fmt(x[3]) << ','
               << fmt(r.acircOverH2[v]) << '\n';
        }
        j.push_back({{"index", i}, {"step", r.step}, {"t", r.t}, {"lambda", r.lambda}, {"center", r.center},
                     {"maxPinch", r.maxPinch}, {"maxAcirc2", r.maxAcirc2}});
    }
    writeJson(out / "rescale.json", j);
    std::cout << j.dump(2) << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean curvature flow of surfaces in R^4: curvature identities, pinching certificates, mesh flows"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "random seed")->capture_default_str();
    auto* outOpt = app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--jobs", g.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    std::uint64_t count = 100000;
    auto* ids = app.add_subcommand("identities", "randomised identity and inequality sweeps");
    ids->add_option("--count", count, "samples per property")->capture_default_str();

    CertifyArgs ca;
    auto* cert = app.add_subcommand("certify", "sample the pinching reaction on the Q = 0 cone");
    cert->add_option("--k", ca.k, "pinching constant")->capture_default_str();
    cert->add_option("--delta", ca.delta, "gamma = 1 - 4k/3 - delta")->capture_default_str();
    cert->add_option("--gamma", ca.gamma, "override gamma");
    cert->add_option("--eps", ca.eps, "epsilon in Q")->capture_default_str();
    cert->add_option("--grid,--resolution", ca.resolution, "sphere grid per axis")->capture_default_str();
    cert->add_option("--random", ca.random, "random unit samples")->capture_default_str();
    cert->add_option("--require", ca.require, "exit 1 unless the max is negative / nonpositive / positive")
        ->check(CLI::IsMember({"negative", "nonpositive", "positive"}));
    cert->add_option("--scan", ca.scan, "bisect for k* in [kLow, kHigh] instead")->expected(2);
    cert->add_option("--tol", ca.tol, "scan tolerance in k")->capture_default_str();

    double kLow = 0.70;
    double kHigh = 0.75;
    auto* scan = app.add_subcommand("scan", "bisect for the largest k with a non-positive sampled reaction");
    scan->add_option("k-low,--k-low", kLow, "lower end of the bracket")->capture_default_str();
    scan->add_option("k-high,--k-high", kHigh, "upper end of the bracket")->capture_default_str();
    scan->add_option("--tol", ca.tol, "tolerance in k")->capture_default_str();
    scan->add_option("--grid,--resolution", ca.resolution)->capture_default_str();
    scan->add_option("--random", ca.random)->capture_default_str();

    std::string scenario;
    auto* flow = app.add_subcommand("flow", "run a flow scenario (built-in name or file)");
    flow->add_option("scenario", scenario, "sphere_r1 | clifford_r1 | pinched_ellipsoid | path")->required();

    std::string flowDir;
    auto* resc = app.add_subcommand("rescale", "type-I rescaling of the snapshots of a finished flow run");
    resc->add_option("flow-dir", flowDir, "output directory of `flow`")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*ids) {
            return cmdIdentities(g, count);
        }
        if (*cert) {
            return cmdCertify(g, ca);
        }
        if (*scan) {
            return cmdScan(g, ca, kLow, kHigh);
        }
        if (*flow) {
            return cmdFlow(g, scenario, outOpt->count() > 0);
        }
        if (*resc) {
            return cmdRescale(g, flowDir, outOpt->count() > 0);
        }
    } catch (const FlowAborted& e) {
        std::cerr << "flow aborted at " << e.what() << (e.numerical() ? " [numerical]" : "") << '\n';
        return kNumeric;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const NonManifoldMesh& e) {
        std::cerr << "invalid mesh: " << e.what() << '\n';
        return kUsage;
    } catch (const InvalidK& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const ResolutionTooCoarse& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const BracketInvalid& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumeric;
    }
    return kUsage;
}
