#pragma once

// Sampling certificate for the sign of the pinching reaction terms on the zero set of
//   Q = |A|² + 2γ|K⊥| - k|H|² + ε.
// On Q = 0 the mean curvature is eliminated via (k - 1/2)|H|² = |Å|² + 2γ|K⊥| + ε, which
// leaves a polynomial in the trace-free components (a, b, c). With ε = 0 it is homogeneous
// of degree four, so its sign is decided on the unit sphere.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mcf4/curvature.hpp"
#include "mcf4/errors.hpp"
#include "mcf4/format.hpp"

namespace mcf4 {

struct ConeSample {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double eps = 0.0;
    double k = 0.725;
    double gamma = 1.0 / 30.0;

    /// |H|² forced by Q = 0.
    double inducedH2() const {
        return (2 * a * a + 2 * b * b + 2 * c * c + 2 * gamma * std::abs(2 * a * c) + eps) / (k - 0.5);
    }
};

inline double pinchingGamma(double k, double delta = 0.0) { return 1.0 - 4.0 / 3.0 * k - delta; }

namespace detail {
inline void requireK(double k) {
    if (!(k > 0.5)) {
        throw InvalidK("k must exceed 1/2, got " + std::to_string(k));
    }
}
} // namespace detail

/// Reaction terms of the Q evolution at a point where Q = 0, written in (a, b, c).
inline double reactionAtZeroQ(const ConeSample& s) {
    detail::requireK(s.k);
    const double inv = 1.0 / (s.k - 0.5);
    const double acirc1 = 2 * s.a * s.a;
    const double acirc2 = 2 * s.b * s.b + 2 * s.c * s.c;
    const double kperp = std::abs(2 * s.a * s.c);
    const double g = s.gamma;
    const double e = s.eps;
    return (-inv + 2) * 4 * s.a * s.a * s.b * s.b + (-inv + 2) * g * kperp * acirc1 +
           (-3 * inv + 6) * g * kperp * acirc2 + (-inv + 2) * acirc2 * acirc2 +
           (-(1 + 2 * g * g) * inv + 6) * kperp * kperp - e * (2 + inv) * acirc1 - 2 * e * inv * acirc2 -
           3 * e * g * kperp * inv - e * e * inv;
}

/// The two curly brackets of the grouped upper bound, each with its prefactor (4c² and
/// 4|ac|). Terms involving b and ε are the ones discarded by the grouping.
struct GroupedBrackets {
    double first = 0.0;
    double second = 0.0;
    double total() const { return first + second; }
};

inline GroupedBrackets groupedBrackets(const ConeSample& s, double eta1, double eta2) {
    detail::requireK(s.k);
    if (!(eta1 >= 0.0 && eta1 <= 1.0 && eta2 >= 0.0 && eta2 <= 1.0)) {
        throw Error("groupedFormValue: eta1, eta2 must lie in [0, 1]");
    }
    const double inv = 1.0 / (s.k - 0.5);
    const double g = s.gamma;
    const double cA = -inv + 2;
    const double cG = -3 * inv + 6;
    const double cK = -(1 + 2 * g * g) * inv + 6;
    const double ac = std::abs(s.a * s.c);
    const double a2 = s.a * s.a;
    const double c2 = s.c * s.c;
    GroupedBrackets out;
    out.first = 4 * c2 * (cA * c2 + eta1 * cG * g * ac + eta2 * cK * a2);
    out.second = 4 * ac * (cA * g * a2 + (1 - eta2) * cK * ac + (1 - eta1) * cG * g * c2);
    return out;
}

inline double groupedFormValue(const ConeSample& s, double eta1, double eta2) {
    return groupedBrackets(s, eta1, eta2).total();
}

struct GroupingChoice {
    double eta1 = 0.0;
    double eta2 = 0.0;
    /// max over unit directions (|a|, |c|) of max(first, second); negative means the
    /// bracket-wise argument closes for this (k, γ).
    double worstBracket = 0.0;
};

/// Grid search over (η₁, η₂) ∈ [0,1]² for the grouping whose brackets are most negative.
inline GroupingChoice bestGrouping(double k, double gamma, int etaResolution = 101, int angleResolution = 361) {
    detail::requireK(k);
    GroupingChoice best;
    best.worstBracket = std::numeric_limits<double>::infinity();
    for (int i = 0; i < etaResolution; ++i) {
        const double eta1 = static_cast<double>(i) / (etaResolution - 1);
        for (int j = 0; j < etaResolution; ++j) {
            const double eta2 = static_cast<double>(j) / (etaResolution - 1);
            double worst = -std::numeric_limits<double>::infinity();
            for (int m = 0; m < angleResolution; ++m) {
                const double phi = 0.5 * std::numbers::pi * m / (angleResolution - 1);
                ConeSample s{std::cos(phi), 0.0, std::sin(phi), 0.0, k, gamma};
                const auto br = groupedBrackets(s, eta1, eta2);
                worst = std::max({worst, br.first, br.second});
            }
            if (worst < best.worstBracket) {
                best = {eta1, eta2, worst};
            }
        }
    }
    return best;
}

struct SampleValue {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double value = 0.0;
    std::uint64_t index = 0;
};

struct GridSpec {
    int sphereResolution = 256;
    std::uint64_t randomSamples = 1'000'000;
    std::uint64_t seed = 42;
    /// Replaces γ = 1 - 4k/3 - δ when set (used to study (k, γ) pairs the gradient terms forbid).
    std::optional<double> gammaOverride;
    double eps = 0.0;
    int jobs = 1;
    std::size_t worstCount = 100;
};

struct CertificateReport {
    double k = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    double eps = 0.0;
    double maxValue = -std::numeric_limits<double>::infinity();
    ConeSample argmax;
    std::uint64_t sampleCount = 0;
    GridSpec grid;
    std::vector<SampleValue> worst; // descending by value

    /// Values at or below this (on the unit sphere) count as non-positive.
    static constexpr double kNonPositiveTol = 1e-12;
    bool strictlyNegative() const { return maxValue < 0.0; }
    bool nonPositive() const { return maxValue <= kNonPositiveTol; }
};

namespace detail {

struct PartialMax {
    double maxValue = -std::numeric_limits<double>::infinity();
    SampleValue arg;
    std::vector<SampleValue> worst;
    std::uint64_t count = 0;
};

inline bool worseFirst(const SampleValue& x, const SampleValue& y) {
    if (x.value != y.value) {
        return x.value > y.value;
    }
    return x.index < y.index;
}

inline void accumulate(PartialMax& acc, const SampleValue& sv, std::size_t keep) {
    ++acc.count;
    if (sv.value > acc.maxValue || (sv.value == acc.maxValue && sv.index < acc.arg.index)) {
        acc.maxValue = sv.value;
        acc.arg = sv;
    }
    if (keep == 0) {
        return;
    }
    if (acc.worst.size() < keep) {
        acc.worst.push_back(sv);
        std::push_heap(acc.worst.begin(), acc.worst.end(), worseFirst);
    } else if (worseFirst(sv, acc.worst.front())) {
        std::pop_heap(acc.worst.begin(), acc.worst.end(), worseFirst);
        acc.worst.back() = sv;
        std::push_heap(acc.worst.begin(), acc.worst.end(), worseFirst);
    }
}

inline constexpr std::uint64_t kRandomChunk = 1 << 16;

} // namespace detail

/// Maximum of reactionAtZeroQ over a (θ, φ) grid of the canonical octant a, c ≥ 0 of the unit
/// sphere plus uniformly random unit directions. Sample sets depend only on the grid spec,
/// never on the number of jobs.
inline CertificateReport certifyNegativity(double k, double delta, const GridSpec& grid) {
    if (!(k > 0.5 && k <= 1.0)) {
        throw InvalidK("certifyNegativity: k must lie in (1/2, 1], got " + std::to_string(k));
    }
    if (grid.sphereResolution < 64) {
        throw ResolutionTooCoarse("certifyNegativity: sphere resolution must be at least 64 per axis");
    }
    const double gamma = grid.gammaOverride.value_or(pinchingGamma(k, delta));
    const int res = grid.sphereResolution;
    const std::uint64_t gridCount = static_cast<std::uint64_t>(res) * static_cast<std::uint64_t>(res);
    const std::uint64_t chunks = (grid.randomSamples + detail::kRandomChunk - 1) / detail::kRandomChunk;

    auto evaluate = [&](double a, double b, double c, std::uint64_t index) {
        ConeSample s{a, b, c, grid.eps, k, gamma};
        return SampleValue{a, b, c, reactionAtZeroQ(s), index};
    };

    // Work items: grid rows, then random chunks.
    const std::uint64_t items = static_cast<std::uint64_t>(res) + chunks;
    auto runRange = [&](std::uint64_t begin, std::uint64_t end, detail::PartialMax& acc) {
        for (std::uint64_t item = begin; item < end; ++item) {
            if (item < static_cast<std::uint64_t>(res)) {
                const double theta = std::numbers::pi * static_cast<double>(item) / (res - 1);
                for (int j = 0; j < res; ++j) {
                    const double phi = 0.5 * std::numbers::pi * j / (res - 1);
                    const double a = std::sin(theta) * std::cos(phi);
                    const double c = std::sin(theta) * std::sin(phi);
                    const double b = std::cos(theta);
                    detail::accumulate(acc, evaluate(a, b, c, item * res + static_cast<std::uint64_t>(j)),
                                       grid.worstCount);
                }
            } else {
                const std::uint64_t chunk = item - static_cast<std::uint64_t>(res);
                std::mt19937_64 rng(grid.seed * 0x9E3779B97F4A7C15ULL + chunk);
                std::normal_distribution<double> normal(0.0, 1.0);
                const std::uint64_t first = chunk * detail::kRandomChunk;
                const std::uint64_t last = std::min(grid.randomSamples, first + detail::kRandomChunk);
                for (std::uint64_t n = first; n < last; ++n) {
                    double a = normal(rng);
                    double b = normal(rng);
                    double c = normal(rng);
                    const double r = std::sqrt(a * a + b * b + c * c);
                    if (r == 0.0) {
                        continue;
                    }
                    a = std::abs(a) / r;
                    b /= r;
                    c = std::abs(c) / r;
                    detail::accumulate(acc, evaluate(a, b, c, gridCount + n), grid.worstCount);
                }
            }
        }
    };

    const int jobs = std::max(1, grid.jobs);
    std::vector<detail::PartialMax> partial(static_cast<std::size_t>(jobs));
    if (jobs == 1) {
        runRange(0, items, partial[0]);
    } else {
        std::vector<std::thread> workers;
        const std::uint64_t per = (items + jobs - 1) / jobs;
        for (int w = 0; w < jobs; ++w) {
            const std::uint64_t begin = std::min(items, per * w);
            const std::uint64_t end = std::min(items, begin + per);
            workers.emplace_back([&, begin, end, w] { runRange(begin, end, partial[static_cast<std::size_t>(w)]); });
        }
        for (auto& t : workers) {
            t.join();
        }
    }

    detail::PartialMax merged;
    for (const auto& p : partial) {
        merged.count += p.count;
        if (p.count > 0 && (p.maxValue > merged.maxValue ||
                            (p.maxValue == merged.maxValue && p.arg.index < merged.arg.index))) {
            merged.maxValue = p.maxValue;
            merged.arg = p.arg;
        }
        merged.worst.insert(merged.worst.end(), p.worst.begin(), p.worst.end());
    }
    std::sort(merged.worst.begin(), merged.worst.end(), detail::worseFirst);
    if (merged.worst.size() > grid.worstCount) {
        merged.worst.resize(grid.worstCount);
    }

    CertificateReport report;
    report.k = k;
    report.gamma = gamma;
    report.delta = delta;
    report.eps = grid.eps;
    report.maxValue = merged.maxValue;
    report.argmax = ConeSample{merged.arg.a, merged.arg.b, merged.arg.c, grid.eps, k, gamma};
    report.sampleCount = merged.count;
    report.grid = grid;
    report.worst = std::move(merged.worst);
    return report;
}

struct ScanResult {
    double kStar = 0.0;
    double lo = 0.0; // last k where the reaction was non-positive
    double hi = 0.0; // first k where it was positive
    int evaluations = 0;
};

/// Bisection for the largest k at which the sampled reaction stays non-positive.
inline ScanResult thresholdScan(double kLow, double kHigh, double tolK, const GridSpec& grid) {
    if (!(tolK > 0.0) || !(kLow < kHigh)) {
        throw BracketInvalid("thresholdScan: need kLow < kHigh and tolK > 0");
    }
    ScanResult out;
    auto holds = [&](double k) {
        ++out.evaluations;
        return certifyNegativity(k, 0.0, grid).nonPositive();
    };
    if (!holds(kLow)) {
        throw BracketInvalid("thresholdScan: reaction already positive at k-low = " + std::to_string(kLow));
    }
    if (holds(kHigh)) {
        throw BracketInvalid("thresholdScan: reaction still non-positive at k-high = " + std::to_string(kHigh));
    }
    double lo = kLow;
    double hi = kHigh;
    while (hi - lo > tolK) {
        const double mid = 0.5 * (lo + hi);
        (holds(mid) ? lo : hi) = mid;
    }
    out.lo = lo;
    out.hi = hi;
    out.kStar = 0.5 * (lo + hi);
    return out;
}

struct EpsilonZResult {
    double minRatio = std::numeric_limits<double>::infinity();
    SpecialFrameState argmin;
    std::uint64_t sampleCount = 0;
};

/// Sampled minimum of Z / ((|Å|² + 2γ|K⊥|)|H|²) over states with |A|² ≤ f|H|².
/// The ratio is scale invariant, so |H| = 1 and |Å|² ranges over (0, f - 1/2].
inline EpsilonZResult epsilonZScan(double gamma, double pinchFraction, int sphereResolution = 128,
                                   int levels = 32) {
    if (!(pinchFraction > 0.5 && pinchFraction < 5.0 / 6.0)) {
        throw Error("epsilonZScan: pinch fraction must lie in (1/2, 5/6)");
    }
    EpsilonZResult out;
    const double sMax = pinchFraction - 0.5;
    for (int i = 0; i < sphereResolution; ++i) {
        const double theta = std::numbers::pi * i / (sphereResolution - 1);
        for (int j = 0; j < sphereResolution; ++j) {
            const double phi = 0.5 * std::numbers::pi * j / (sphereResolution - 1);
            // unit |Å|² direction: 2(a² + b² + c²) = 1
            const double r = std::sqrt(0.5);
            const double a = r * std::sin(theta) * std::cos(phi);
            const double c = r * std::sin(theta) * std::sin(phi);
            const double b = r * std::cos(theta);
            for (int l = 1; l <= levels; ++l) {
                const double scale = std::sqrt(sMax * l / levels);
                SpecialFrameState s{1.0, a * scale, b * scale, c * scale};
                const double ratio = zLowerBoundRatio(s, gamma);
                ++out.sampleCount;
                if (ratio < out.minRatio) {
                    out.minRatio = ratio;
                    out.argmin = s;
                }
            }
        }
    }
    return out;
}

inline nlohmann::json toJson(const CertificateReport& r) {
    nlohmann::json j;
    j["k"] = r.k;
    j["gamma"] = r.gamma;
    j["delta"] = r.delta;
    j["eps"] = r.eps;
    j["maxValue"] = r.maxValue;
    j["strictlyNegative"] = r.strictlyNegative();
    j["nonPositive"] = r.nonPositive();
    j["argmax"] = {{"a", r.argmax.a}, {"b", r.argmax.b}, {"c", r.argmax.c}};
    j["sampleCount"] = r.sampleCount;
    j["grid"] = {{"sphereResolution", r.grid.sphereResolution},
                 {"randomSamples", r.grid.randomSamples},
                 {"seed", r.grid.seed},
                 {"gammaOverride", r.grid.gammaOverride ? nlohmann::json(*r.grid.gammaOverride) : nlohmann::json()}};
    return j;
}

/// Worst samples as CSV: a,b,c,value.
inline void writeWorstCsv(std::ostream& os, const CertificateReport& r) {
    os << "a,b,c,value\n";
    for (const auto& w : r.worst) {
        os << fmt(w.a) << ',' << fmt(w.b) << ',' << fmt(w.c) << ',' << fmt(w.value) << '\n';
    }
}

} // namespace mcf4
