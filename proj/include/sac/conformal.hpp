#pragma once

// Conformal map from the semi-infinite strip Re z > 1 around the real axis to
// the unit disk:
//   xi = cosh((z - 1)/epsilon + i pi/2),   w = (xi - i eta) / (xi + i eta).
// The von Neumann point z = 1 lands on w = -1 and the real half-line z > 1 on
// the open interval (-1, 1).

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sac/error.hpp"

namespace sac {

struct ConformalParams {
    double epsilon = 4.0;  // strip half-width scale
    double eta = 0.5;      // Moebius parameter

    void validate() const {
        detail::require(std::isfinite(epsilon) && epsilon > 0.0, "ConformalParams: epsilon must be > 0");
        detail::require(std::isfinite(eta) && eta > 0.0, "ConformalParams: eta must be > 0");
    }
};

/// Defaults picked by the noiseless sweep recorded in config/conformal_defaults.json.
inline constexpr ConformalParams kDefaultConformal{4.0, 0.5};

inline std::complex<double> map_to_disk(std::complex<double> z, const ConformalParams& p) {
    p.validate();
    const double x = (z.real() - 1.0) / p.epsilon;
    const double y = z.imag() / p.epsilon;
    // cosh(x + i(y + pi/2)) = -cosh(x) sin(y) + i sinh(x) cos(y), exact on the real axis
    if (x > 30.0) {
        // xi is huge; use w = (1 - t)/(1 + t) with t = i eta / xi to avoid overflow
        const std::complex<double> unit(-std::sin(y), std::cos(y));
        const std::complex<double> t = std::complex<double>(0.0, p.eta) * 2.0 * std::exp(-x) / unit;
        return (1.0 - t) / (1.0 + t);
    }
    const std::complex<double> xi(-std::cosh(x) * std::sin(y), std::sinh(x) * std::cos(y));
    const std::complex<double> den = xi + std::complex<double>(0.0, p.eta);
    if (std::abs(den) == 0.0) throw InvalidArgument("map_to_disk: z sits on the pole of the Moebius map");
    return (xi - std::complex<double>(0.0, p.eta)) / den;
}

/// Real-axis specialization: w = (s - eta)/(s + eta) with s = sinh((z - 1)/epsilon).
inline double map_to_disk(double z, const ConformalParams& p) {
    p.validate();
    detail::require(z >= 1.0, "map_to_disk: real z must satisfy z >= 1");
    const double x = (z - 1.0) / p.epsilon;
    if (x > 30.0) {
        const double t = 2.0 * p.eta * std::exp(-x);
        return (1.0 - t) / (1.0 + t);
    }
    const double s = std::sinh(x);
    return (s - p.eta) / (s + p.eta);
}

enum class SubtractionRule { first_point, midpoint, explicit_value };

struct SubtractionPoint {
    SubtractionRule rule = SubtractionRule::first_point;
    double value = 0.0;  // used by explicit_value only

    static SubtractionPoint first_point() { return {SubtractionRule::first_point, 0.0}; }
    static SubtractionPoint midpoint() { return {SubtractionRule::midpoint, 0.0}; }
    static SubtractionPoint at(double w0) { return {SubtractionRule::explicit_value, w0}; }
};

/// Disk images of the Renyi orders 2..k_max plus the subtraction point.
struct DiskPoints {
    std::vector<int> orders;
    std::vector<double> w;
    double w0 = 0.0;
    double w_target = -1.0;

    std::size_t size() const { return orders.size(); }

    /// Position of a Renyi order in `orders`; throws when absent.
    std::size_t index_of(int order) const {
        for (std::size_t i = 0; i < orders.size(); ++i) {
            if (orders[i] == order) return i;
        }
        throw InvalidArgument("DiskPoints: order " + std::to_string(order) + " not present");
    }

    double at_order(int order) const { return w[index_of(order)]; }

    /// True when w0 lies within `tol` of some data point image.
    bool w0_coincides(double tol = 1e-12) const {
        for (double wi : w) {
            if (std::abs(wi - w0) <= tol) return true;
        }
        return false;
    }
};

inline DiskPoints map_orders(const std::vector<int>& orders, const ConformalParams& params, SubtractionPoint rule) {
    params.validate();
    detail::require(orders.size() >= 2, "map_data_points: need at least two orders");
    DiskPoints pts;
    pts.orders = orders;
    for (std::size_t i = 0; i < orders.size(); ++i) {
        detail::require(orders[i] >= 2, "map_data_points: orders must be >= 2");
        if (i > 0) detail::require(orders[i] > orders[i - 1], "map_data_points: orders must increase");
        pts.w.push_back(map_to_disk(static_cast<double>(orders[i]), params));
    }
    switch (rule.rule) {
        case SubtractionRule::first_point:
            pts.w0 = pts.w.front();
            break;
        case SubtractionRule::midpoint:
            pts.w0 = 0.5 * (pts.w.front() + pts.w.back());
            break;
        case SubtractionRule::explicit_value:
            detail::require(rule.value > -1.0 && rule.value < 1.0, "map_data_points: explicit w0 must lie in (-1, 1)");
            pts.w0 = rule.value;
            break;
    }
    return pts;
}

inline DiskPoints map_data_points(int k_max, const ConformalParams& params, SubtractionPoint rule) {
    detail::require(k_max >= 3, "map_data_points: k_max >= 3 required");
    std::vector<int> orders;
    for (int k = 2; k <= k_max; ++k) orders.push_back(k);
    return map_orders(orders, params, rule);
}

}  // namespace sac
