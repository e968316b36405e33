#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace mcf4 {

/// Shortest decimal that round-trips to the same double.
inline std::string fmt(double x) {
    if (std::isnan(x)) {
        return "nan";
    }
    if (std::isinf(x)) {
        return x > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

} // namespace mcf4
