#pragma once

// Conventional polynomial extrapolations of S_k to k = 1.

#include <Eigen/Dense>

#include <string>

#include "sac/error.hpp"
#include "sac/estimator.hpp"

namespace sac {

enum class BaselineMethod { chebyshev, least_squares };

inline const char* to_string(BaselineMethod m) { return m == BaselineMethod::chebyshev ? "chebyshev" : "lsq"; }

struct BaselineEstimate {
    BaselineMethod method = BaselineMethod::chebyshev;
    double value = 0.0;  // bits
    int degree = 0;
};

/// Interpolates S_k through every order in the Chebyshev basis on [2, k_max]
/// mapped to [-1, 1], then evaluates the interpolant at the image of k = 1.
inline BaselineEstimate chebyshev_extrapolate(const RenyiDataset& data) {
    data.validate();
    detail::require(data.size() >= 2 && data.k_max() >= 3, "chebyshev_extrapolate: need k_max >= 3");
    const auto n = static_cast<Eigen::Index>(data.size());
    const double lo = data.orders.front();
    const double hi = data.k_max();
    auto to_unit = [&](double k) { return 2.0 * (k - lo) / (hi - lo) - 1.0; };
    auto basis = [&](double x) {
        Eigen::RowVectorXd t(n);
        t[0] = 1.0;
        if (n > 1) t[1] = x;
        for (Eigen::Index j = 2; j < n; ++j) t[j] = 2.0 * x * t[j - 1] - t[j - 2];
        return t;
    };
    Eigen::MatrixXd v(n, n);
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v.row(i) = basis(to_unit(data.orders[i]));
        s[i] = data.values[i];
    }
    const Eigen::VectorXd c = v.fullPivLu().solve(s);
    return {BaselineMethod::chebyshev, basis(to_unit(1.0)).dot(c), static_cast<int>(n - 1)};
}

/// Ordinary least squares of S_k on 1, k, ..., k^degree, evaluated at k = 1.
inline BaselineEstimate least_squares_poly(const RenyiDataset& data, int degree = 2) {
    data.validate();
    detail::require(degree >= 1, "least_squares_poly: degree must be >= 1");
    detail::require(data.k_max() >= 3 && degree <= data.k_max() - 2 && degree <= static_cast<int>(data.size()) - 1,
                    "least_squares_poly: need 1 <= degree <= k_max - 2");
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd x(n, degree + 1);
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 1.0;
        for (int j = 0; j <= degree; ++j, p *= data.orders[i]) x(i, j) = p;
        s[i] = data.values[i];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < degree + 1) throw NumericalError("least_squares_poly: rank-deficient design matrix");
    const Eigen::VectorXd c = qr.solve(s);
    return {BaselineMethod::least_squares, c.sum(), degree};
}

}  // namespace sac
