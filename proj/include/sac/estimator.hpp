#pragma once

// Stabilized analytic continuation of Renyi data to the von Neumann point.
//
// The discrepancy D_alpha(z) = (S_z - alpha)/(z - 1) carries a pole at z = 1
// with residue S_vN - alpha. After mapping to the disk, the minimal boundary
// norm delta^2(alpha) of an analytic interpolant of the data is smallest when
// alpha cancels the pole; that alpha is the estimate.
//
// Noiseless data: subtraction at the first data point, orders 3..k_max enter
// the kernel, and alpha_min has a closed form.
// Noisy data: the data may move inside the chi^2 ellipsoid of its covariance,
// the subtraction value y0 is variational, all orders 2..k_max enter the
// kernel, and delta^2(alpha) is found by a Lagrange multiplier solve.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sac/conformal.hpp"
#include "sac/error.hpp"
#include "sac/kernel.hpp"
#include "sac/roots.hpp"

namespace sac {

/// Renyi entropies S_k (bits) at integer orders, with optional covariance (bits^2).
struct RenyiDataset {
    std::vector<int> orders;
    std::vector<double> values;
    std::optional<Eigen::MatrixXd> covariance;

    std::size_t size() const { return orders.size(); }
    int k_max() const { return orders.empty() ? 0 : orders.back(); }

    bool has_noise() const { return covariance.has_value() && covariance->cwiseAbs().maxCoeff() > 0.0; }

    void validate() const {
        detail::require(!orders.empty(), "RenyiDataset: no orders");
        detail::require(orders.size() == values.size(), "RenyiDataset: orders and values differ in length");
        detail::require(orders.front() == 2, "RenyiDataset: orders must start at 2");
        for (std::size_t i = 1; i < orders.size(); ++i) {
            detail::require(orders[i] > orders[i - 1], "RenyiDataset: orders must be strictly increasing");
        }
        for (double v : values) detail::require(std::isfinite(v), "RenyiDataset: non-finite value");
        if (covariance) {
            const auto& c = *covariance;
            const auto n = static_cast<Eigen::Index>(orders.size());
            detail::require(c.rows() == n && c.cols() == n, "RenyiDataset: covariance shape mismatch");
            detail::require(c.allFinite(), "RenyiDataset: non-finite covariance");
            detail::require((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-10, "RenyiDataset: covariance not symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly);
            const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
            detail::require(es.eigenvalues()[0] >= -1e-8 * top - 1e-300,
                            "RenyiDataset: covariance is not positive semidefinite");
        }
    }

    /// Keeps orders <= k_max.
    RenyiDataset truncated(int k_max) const {
        RenyiDataset out;
        for (std::size_t i = 0; i < orders.size(); ++i) {
            if (orders[i] <= k_max) {
                out.orders.push_back(orders[i]);
                out.values.push_back(values[i]);
            }
        }
        if (covariance) {
            const auto n = static_cast<Eigen::Index>(out.orders.size());
            out.covariance = covariance->topLeftCorner(n, n);
        }
        return out;
    }
};

struct AlphaSample {
    double alpha = 0.0;
    double delta2 = 0.0;
};

struct SacDiagnostics {
    bool noisy = false;
    double lambda = 0.0;
    double y0 = 0.0;
    double chi2_achieved = 0.0;
    double chi2_target = 0.0;
    int iterations = 0;
    double w0 = 0.0;
    double kernel_condition = 0.0;
    bool constraint_inactive = false;   // lambda = 0 at alpha_min
    bool degenerate = false;            // a constant fits within chi^2_0; alpha from the weighted fit
    bool multimodal = false;
    bool bracket_widened = false;
    bool lambda_grid_fallback = false;  // chi^2(lambda) failed the monotonicity check somewhere
    bool routed_to_noiseless = false;   // covariance identically zero
};

struct SacEstimate {
    double alpha_min = 0.0;   // bits
    double delta2_min = 0.0;
    std::vector<AlphaSample> alpha_scan;
    SacDiagnostics solver;
};

/// d_i = (S_i - alpha)/(z_i - 1).
inline Eigen::VectorXd discrepancy_values(std::span<const double> values, std::span<const int> orders, double alpha) {
    detail::require(values.size() == orders.size(), "discrepancy_values: length mismatch");
    Eigen::VectorXd d(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
        detail::require(orders[i] >= 2, "discrepancy_values: orders must be >= 2");
        const double zm1 = static_cast<double>(orders[i] - 1);
        d[static_cast<Eigen::Index>(i)] = values[i] / zm1 - alpha / zm1;
    }
    return d;
}

inline Eigen::VectorXd discrepancy_values(const RenyiDataset& data, double alpha) {
    return discrepancy_values(data.values, data.orders, alpha);
}

namespace detail {

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    return v;
}

inline constexpr int kScanPoints = 61;
inline constexpr double kAlphaTolerance = 1e-6;
inline constexpr double kCovarianceFloor = 1e-12;

}  // namespace detail

// --- noiseless path -------------------------------------------------------

/// Subtracted data split as d'_i(alpha) = u_i - alpha v_i for orders after the first:
///   u_i = S_i/(z_i - 1) - S_2,  v_i = 1/(z_i - 1) - 1.
struct NoiselessForms {
    Eigen::VectorXd u;
    Eigen::VectorXd v;
};

inline NoiselessForms noiseless_forms(const RenyiDataset& data) {
    const auto n = static_cast<Eigen::Index>(data.size()) - 1;
    NoiselessForms f{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    const double s_first = data.values[0] / static_cast<double>(data.orders[0] - 1);
    const double inv_first = 1.0 / static_cast<double>(data.orders[0] - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double zm1 = static_cast<double>(data.orders[i + 1] - 1);
        f.u[i] = data.values[i + 1] / zm1 - s_first;
        f.v[i] = 1.0 / zm1 - inv_first;
    }
    return f;
}

/// alpha_min = (u^T A^-1 v)/(v^T A^-1 v).
inline double closed_form_alpha(const KernelMatrix& a, const NoiselessForms& f) {
    const SpdSolver solver(a);
    const Eigen::VectorXd ainv_v = solver.solve(f.v);
    const double den = f.v.dot(ainv_v);
    if (!(den >= 1e-14)) throw NumericalError("estimate_noiseless: degenerate geometry, v^T A^-1 v = " + std::to_string(den));
    return f.u.dot(ainv_v) / den;
}

inline SacEstimate estimate_noiseless(const RenyiDataset& data, const ConformalParams& params,
                                      KernelMethod method = KernelMethod::dilogarithm) {
    data.validate();
    detail::require(data.size() >= 2, "estimate_noiseless: need k_max >= 3");
    const auto pts = map_orders(data.orders, params, SubtractionPoint::first_point());
    const int first = data.orders.front();
    const auto a = kernel_matrix(pts, std::span<const int>(&first, 1), method);
    const auto forms = noiseless_forms(data);

    SacEstimate est;
    est.alpha_min = closed_form_alpha(a, forms);
    const SpdSolver solver(a);
    auto delta2 = [&](double alpha) {
        const Eigen::VectorXd dp = forms.u - alpha * forms.v;
        return std::max(0.0, solver.inverse_form(dp, dp));
    };
    est.delta2_min = delta2(est.alpha_min);

    const double lo = std::min(0.0, data.values.back() - 1.0);
    const double hi = data.values.front() + 2.0;
    const double half = std::max(1.0, 0.5 * (hi - lo));
    for (double alpha : detail::linspace(est.alpha_min - half, est.alpha_min + half, detail::kScanPoints)) {
        est.alpha_scan.push_back({alpha, delta2(alpha)});
    }
    est.solver.w0 = pts.w0;
    est.solver.y0 = discrepancy_values(data, est.alpha_min)[0];
    est.solver.kernel_condition = a.condition_number();
    return est;
}

// --- noisy path -----------------------------------------------------------

/// (y - d)^T C'^{-1} (y - d), with C' eigenvalues floored at 1e-12 of the largest.
inline double chi2(const Eigen::VectorXd& y, const Eigen::VectorXd& d, const Eigen::MatrixXd& cprime) {
    detail::require(y.size() == d.size() && cprime.rows() == y.size() && cprime.cols() == y.size(),
                    "chi2: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cprime + cprime.transpose()));
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0.0)) throw NumericalError("chi2: covariance is singular");
    const Eigen::VectorXd var = es.eigenvalues().cwiseMax(detail::kCovarianceFloor * top);
    const Eigen::VectorXd r = es.eigenvectors().transpose() * (y - d);
    return (r.array().square() / var.array()).sum();
}

struct ConstrainedSolution {
    double lambda = 0.0;
    double y0 = 0.0;
    Eigen::VectorXd p;
    double chi2 = 0.0;
    int iterations = 0;
    bool constraint_inactive = false;
    bool grid_fallback = false;
};

/// Solves the Lagrange conditions of  min delta^2  s.t.  chi^2 = chi2_0  in the
/// eigenbasis of M (eigenvalues sigma_r):
///   p_r = q_r/(1 + lambda sigma_r),  q_r = m_r - y0 n_r,
///   y0 = [sum n_r m_r/(1 + lambda sigma_r)] / [sum n_r^2/(1 + lambda sigma_r)],
/// with lambda >= 0 the root of sum_r p_r(lambda)^2 = chi2_0.
inline ConstrainedSolution solve_constrained(const Eigen::VectorXd& m, const Eigen::VectorXd& n,
                                             const Eigen::VectorXd& sigma, double chi2_0) {
    detail::require(m.size() == n.size() && m.size() == sigma.size() && m.size() > 0, "solve_constrained: size mismatch");
    detail::require(sigma.minCoeff() > 0.0, "solve_constrained: sigma must be positive");
    detail::require(chi2_0 > 0.0, "solve_constrained: chi2_0 must be positive");
    detail::require(n.squaredNorm() > 0.0, "solve_constrained: n vanishes");

    int evals = 0;
    auto state = [&](double lambda, double& y0, Eigen::VectorXd& p) {
        ++evals;
        const Eigen::ArrayXd f = 1.0 / (1.0 + lambda * sigma.array());
        y0 = (n.array() * m.array() * f).sum() / (n.array().square() * f).sum();
        p = ((m.array() - y0 * n.array()) * f).matrix();
    };
    auto chi2_at = [&](double lambda) {
        double y0;
        Eigen::VectorXd p;
        state(lambda, y0, p);
        return p.squaredNorm();
    };
    auto finish = [&](double lambda, ConstrainedSolution sol) {
        state(lambda, sol.y0, sol.p);
        sol.lambda = lambda;
        sol.chi2 = sol.p.squaredNorm();
        sol.iterations = evals;
        return sol;
    };

    const double c0 = chi2_at(0.0);
    if (c0 <= chi2_0) {
        ConstrainedSolution sol;
        sol.constraint_inactive = true;
        return finish(0.0, sol);
    }

    double hi = 1.0 / sigma.maxCoeff();
    double c_hi = chi2_at(hi);
    for (int i = 0; c_hi >= chi2_0; ++i) {
        if (i > 4000 || !std::isfinite(hi)) throw NumericalError("solve_constrained: cannot bracket the multiplier");
        hi *= 2.0;
        c_hi = chi2_at(hi);
    }

    // chi^2(lambda) must be non-increasing on [0, hi]; sample it before trusting a single crossing
    bool monotone = true;
    double prev = c0;
    for (int i = 1; i <= 20; ++i) {
        const double c = chi2_at(hi * std::pow(1e-6, 1.0 - i / 20.0));
        if (c > prev * (1.0 + 1e-9) + 1e-300) monotone = false;
        prev = c;
    }

    auto f = [&](double t) { return chi2_at(std::exp(t)) - chi2_0; };
    ConstrainedSolution sol;
    double t_lo, t_hi = std::log(hi), f_lo, f_hi = c_hi - chi2_0;
    if (monotone) {
        double lo = hi;
        double c_lo = c_hi;
        for (int i = 0; c_lo <= chi2_0; ++i) {
            if (i > 4000 || lo == 0.0) throw NumericalError("solve_constrained: cannot bracket the multiplier from below");
            lo *= 0.5;
            c_lo = chi2_at(lo);
        }
        t_lo = std::log(lo);
        f_lo = c_lo - chi2_0;
    } else {
        // first crossing on a dense logarithmic grid
        sol.grid_fallback = true;
        const int grid = 2000;
        double t_prev = std::log(hi) - 40.0 * std::log(10.0);
        double f_prev = f(t_prev);
        if (f_prev <= 0.0) throw NumericalError("solve_constrained: grid fallback could not bracket the multiplier");
        t_lo = t_prev;
        f_lo = f_prev;
        for (int i = 1; i <= grid; ++i) {
            const double t = t_prev + (std::log(hi) - t_prev) * i / grid;
            const double ft = f(t);
            if (ft <= 0.0) {
                t_hi = t;
                f_hi = ft;
                break;
            }
            t_lo = t;
            f_lo = ft;
        }
    }
    const auto root = brent_root(f, t_lo, t_hi, f_lo, f_hi, 1e-13);
    return finish(std::exp(root.x), sol);
}

struct NoisyOptions {
    std::optional<double> chi2_0;  // default: k_max
    SubtractionPoint subtraction = SubtractionPoint::midpoint();
    KernelMethod kernel = KernelMethod::dilogarithm;
};

/// Precomputed Lagrange-problem geometry for one dataset; delta^2(alpha) only
/// re-projects the discrepancy vector.
class NoisyProblem {
public:
    NoisyProblem(const RenyiDataset& data, const ConformalParams& params, const NoisyOptions& opt) : data_(data) {
        data_.validate();
        detail::require(data_.covariance.has_value(), "estimate_noisy: covariance required");
        detail::require(data_.size() >= 2, "estimate_noisy: need k_max >= 3");
        chi2_0_ = opt.chi2_0.value_or(static_cast<double>(data_.k_max()));
        detail::require(chi2_0_ > 0.0, "estimate_noisy: chi2_0 must be positive");

        const auto n = static_cast<Eigen::Index>(data_.size());
        Eigen::VectorXd zm1(n);
        for (Eigen::Index i = 0; i < n; ++i) zm1[i] = static_cast<double>(data_.orders[i] - 1);
        const Eigen::MatrixXd& c = *data_.covariance;
        const Eigen::MatrixXd cprime = (c.array() / (zm1 * zm1.transpose()).array()).matrix();

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ce(0.5 * (cprime + cprime.transpose()));
        const double top = ce.eigenvalues().maxCoeff();
        if (!(top > 0.0)) throw NumericalError("estimate_noisy: covariance is zero");
        o_ = ce.eigenvectors();
        eps_ = ce.eigenvalues().cwiseMax(detail::kCovarianceFloor * top).cwiseSqrt();

        points_ = map_orders(data_.orders, params, opt.subtraction);
        if (points_.w0_coincides(1e-12)) {
            throw InvalidArgument("estimate_noisy: subtraction point coincides with a data point");
        }
        const auto a = kernel_matrix(points_, {}, opt.kernel);
        condition_ = a.condition_number();
        const Eigen::MatrixXd b = o_.transpose() * a.matrix() * o_;
        const Eigen::MatrixXd mmat = (b.array() / (eps_ * eps_.transpose()).array()).matrix();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> me(0.5 * (mmat + mmat.transpose()));
        sigma_ = me.eigenvalues();
        if (!(sigma_.minCoeff() > 0.0)) throw NumericalError("estimate_noisy: M is not positive definite");
        f_ = me.eigenvectors();

        const Eigen::VectorXd ones_e = o_.transpose() * Eigen::VectorXd::Ones(n);
        n_ = f_.transpose() * ones_e.cwiseQuotient(eps_);
        // d(alpha) = a_vec - alpha b_vec
        a_vec_ = discrepancy_values(data_, 0.0);
        b_vec_ = a_vec_ - discrepancy_values(data_, 1.0);
        mb_ = project(b_vec_);
    }

    double chi2_target() const { return chi2_0_; }
    double w0() const { return points_.w0; }
    double kernel_condition() const { return condition_; }
    const Eigen::VectorXd& sigma() const { return sigma_; }
    const Eigen::VectorXd& n_vector() const { return n_; }

    Eigen::VectorXd m_vector(double alpha) const { return project(a_vec_ - alpha * b_vec_); }

    ConstrainedSolution solve(double alpha) const { return solve_constrained(m_vector(alpha), n_, sigma_, chi2_0_); }

    static double delta2(const ConstrainedSolution& s, const Eigen::VectorXd& sigma) {
        if (s.constraint_inactive) return 0.0;
        return s.lambda * s.lambda * (sigma.array() * s.p.array().square()).sum();
    }

    double delta2(double alpha) const { return delta2(solve(alpha), sigma_); }

    /// d delta^2 / d alpha = -2 lambda p . m_b, from the Lagrangian at the optimum.
    double slope(double alpha) const {
        const auto s = solve(alpha);
        if (s.constraint_inactive) return 0.0;
        return -2.0 * s.lambda * s.p.dot(mb_);
    }

    /// Minimizer over (alpha, y0) of the unconstrained chi^2 of a constant
    /// interpolant, i.e. the covariance-weighted fit S_z = alpha + y0 (z - 1).
    std::pair<double, double> weighted_fit() const {
        const Eigen::VectorXd ma = project(a_vec_);
        const Eigen::VectorXd mb = project(b_vec_);
        const Eigen::VectorXd un = n_ / n_.norm();
        const Eigen::VectorXd pa = ma - un.dot(ma) * un;
        const Eigen::VectorXd pb = mb - un.dot(mb) * un;
        const double den = pb.squaredNorm();
        if (!(den > 0.0)) throw NumericalError("estimate_noisy: weighted fit is degenerate");
        const double alpha = pa.dot(pb) / den;
        return {alpha, (pa - alpha * pb).squaredNorm()};
    }

private:
    Eigen::VectorXd project(const Eigen::VectorXd& d) const {
        return f_.transpose() * (o_.transpose() * d).cwiseQuotient(eps_);
    }

    RenyiDataset data_;
    double chi2_0_ = 0.0;
    Eigen::MatrixXd o_;
    Eigen::VectorXd eps_;
    DiskPoints points_;
    double condition_ = 0.0;
    Eigen::VectorXd sigma_;
    Eigen::MatrixXd f_;
    Eigen::VectorXd n_;
    Eigen::VectorXd a_vec_, b_vec_, mb_;
};

inline SacEstimate estimate_noisy(const RenyiDataset& data, const ConformalParams& params, const NoisyOptions& opt = {}) {
    data.validate();
    detail::require(data.covariance.has_value(), "estimate_noisy: covariance required");
    if (!data.has_noise()) {
        RenyiDataset exact = data;
        exact.covariance.reset();
        auto est = estimate_noiseless(exact, params, opt.kernel);
        est.solver.routed_to_noiseless = true;
        return est;
    }

    const NoisyProblem problem(data, params, opt);
    SacEstimate est;
    est.solver.noisy = true;
    est.solver.chi2_target = problem.chi2_target();
    est.solver.w0 = problem.w0();
    est.solver.kernel_condition = problem.kernel_condition();

    bool any_fallback = false;
    auto delta2 = [&](double alpha) {
        const auto s = problem.solve(alpha);
        any_fallback = any_fallback || s.grid_fallback;
        return NoisyProblem::delta2(s, problem.sigma());
    };

    double lo = std::min(0.0, data.values.back() - 1.0);
    double hi = data.values.front() + 2.0;
    std::vector<double> grid, vals;
    auto scan = [&] {
        grid = detail::linspace(lo, hi, detail::kScanPoints);
        vals.clear();
        for (double a : grid) vals.push_back(delta2(a));
    };
    scan();

    const auto [fit_alpha, fit_chi2] = problem.weighted_fit();
    if (fit_chi2 <= problem.chi2_target()) {
        // a constant interpolant already fits: delta^2 = 0 on a whole alpha interval
        est.alpha_min = fit_alpha;
        est.delta2_min = 0.0;
        const auto s = problem.solve(fit_alpha);
        est.solver.lambda = s.lambda;
        est.solver.y0 = s.y0;
        est.solver.chi2_achieved = s.chi2;
        est.solver.iterations = s.iterations;
        est.solver.constraint_inactive = true;
        est.solver.degenerate = true;
    } else {
        auto argmin = [&] { return static_cast<int>(std::min_element(vals.begin(), vals.end()) - vals.begin()); };
        int i = argmin();
        for (int widen = 0; widen < 8 && (i == 0 || i == detail::kScanPoints - 1); ++widen) {
            const double width = hi - lo;
            if (i == 0) lo -= width;
            else hi += width;
            est.solver.bracket_widened = true;
            scan();
            i = argmin();
        }
        int minima = 0;
        for (int j = 0; j < detail::kScanPoints; ++j) {
            const bool left_ok = j == 0 || vals[j] < vals[j - 1];
            const bool right_ok = j == detail::kScanPoints - 1 || vals[j] < vals[j + 1];
            if (left_ok && right_ok) ++minima;
        }
        est.solver.multimodal = minima > 1;

        const double a = grid[std::max(i - 1, 0)];
        const double b = grid[std::min(i + 1, detail::kScanPoints - 1)];
        auto best = golden_section(delta2, a, b, detail::kAlphaTolerance);
        // polish on the stationarity condition; golden section alone stalls near sqrt(machine eps)
        const double h = 4.0 * detail::kAlphaTolerance;
        const double sl = problem.slope(best.x - h), sr = problem.slope(best.x + h);
        if (sl < 0.0 && sr > 0.0) {
            const auto root = brent_root([&](double x) { return problem.slope(x); }, best.x - h, best.x + h, sl, sr, 1e-14);
            best = {root.x, delta2(root.x), best.iterations + root.iterations};
        }
        est.alpha_min = best.x;
        est.delta2_min = best.fx;
        if (vals[i] < best.fx) {
            est.alpha_min = grid[i];
            est.delta2_min = vals[i];
        }
        const auto s = problem.solve(est.alpha_min);
        est.solver.lambda = s.lambda;
        est.solver.y0 = s.y0;
        est.solver.chi2_achieved = s.chi2;
        est.solver.iterations = s.iterations;
        est.solver.constraint_inactive = s.constraint_inactive;
    }
    est.solver.lambda_grid_fallback = any_fallback;
    for (std::size_t j = 0; j < grid.size(); ++j) est.alpha_scan.push_back({grid[j], vals[j]});
    return est;
}

/// Noisy path when the dataset carries a nonzero covariance, closed form otherwise.
inline SacEstimate estimate_sac(const RenyiDataset& data, const ConformalParams& params, const NoisyOptions& opt = {}) {
    if (data.has_noise()) return estimate_noisy(data, params, opt);
    RenyiDataset exact = data;
    exact.covariance.reset();
    return estimate_noiseless(exact, params, opt.kernel);
}

}  // namespace sac
