#pragma once

#include <cmath>
#include <numbers>

#include "sac/error.hpp"

namespace sac {

namespace detail {

// Li2(x) = sum_{k>=1} x^k / k^2, for |x| <= 1/2 (converges like 2^-k).
inline double dilog_series(double x) {
    double term = x;
    double sum = 0.0;
    for (int k = 1; k < 200; ++k) {
        const double add = term / (static_cast<double>(k) * k);
        sum += add;
        if (std::abs(add) < 1e-18 * std::abs(sum)) break;
        term *= x;
    }
    return sum;
}

}  // namespace detail

/// Real dilogarithm on the open interval (-1, 1).
inline double dilog(double x) {
    if (!(x > -1.0 && x < 1.0)) throw InvalidArgument("dilog: argument must satisfy |x| < 1");
    if (x == 0.0) return 0.0;
    if (x < 0.0) {
        // Landen: Li2(x) = -Li2(x/(x-1)) - ln^2(1-x)/2, with x/(x-1) in (0, 1/2)
        const double l = std::log1p(-x);
        return -detail::dilog_series(x / (x - 1.0)) - 0.5 * l * l;
    }
    if (x <= 0.5) return detail::dilog_series(x);
    // reflection: Li2(x) = pi^2/6 - ln(x) ln(1-x) - Li2(1-x)
    return std::numbers::pi * std::numbers::pi / 6.0 - std::log(x) * std::log1p(-x) - detail::dilog_series(1.0 - x);
}

}  // namespace sac
