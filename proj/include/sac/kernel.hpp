#pragma once

// Gram matrix of the boundary log kernels
//   g_i(theta) = ln|e^{i theta} - w_i| - ln|e^{i theta} - w0|,
//   A_ij = (2/pi) int_0^{2 pi} g_i g_j d theta,
// whose inverse gives the minimal boundary norm of an analytic interpolant.
// Rows and columns are addressed by Renyi order, not by array position.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sac/conformal.hpp"
#include "sac/dilog.hpp"
#include "sac/error.hpp"
#include "sac/quadrature.hpp"

namespace sac {

enum class KernelMethod { quadrature, dilogarithm };

inline constexpr double kMaxCondition = 1e14;

class KernelMatrix {
public:
    KernelMatrix(Eigen::MatrixXd a, std::vector<int> orders, std::vector<double> w, double w0, KernelMethod method)
        : a_(std::move(a)), orders_(std::move(orders)), w_(std::move(w)), w0_(w0), method_(method) {
        detail::require(a_.rows() == a_.cols() && a_.rows() == static_cast<Eigen::Index>(orders_.size()),
                        "KernelMatrix: shape does not match the order list");
        const double asym = a_.rows() ? (a_ - a_.transpose()).cwiseAbs().maxCoeff() : 0.0;
        if (asym > 1e-10) throw NumericalError("KernelMatrix: not symmetric (" + std::to_string(asym) + ")");
        a_ = 0.5 * (a_ + a_.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a_, Eigen::EigenvaluesOnly);
        eigenvalues_ = es.eigenvalues();
        if (eigenvalues_.size() && !(eigenvalues_[0] > 0.0)) {
            throw NumericalError("KernelMatrix: not positive definite (smallest eigenvalue " +
                                 std::to_string(eigenvalues_[0]) + ")");
        }
    }

    const Eigen::MatrixXd& matrix() const { return a_; }
    const std::vector<int>& orders() const { return orders_; }
    const std::vector<double>& points() const { return w_; }
    double w0() const { return w0_; }
    KernelMethod method() const { return method_; }
    Eigen::Index size() const { return a_.rows(); }
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

    double condition_number() const {
        return eigenvalues_.size() ? eigenvalues_[eigenvalues_.size() - 1] / eigenvalues_[0] : 1.0;
    }

    Eigen::Index index_of(int order) const {
        const auto it = std::find(orders_.begin(), orders_.end(), order);
        if (it == orders_.end()) throw InvalidArgument("KernelMatrix: order " + std::to_string(order) + " not present");
        return static_cast<Eigen::Index>(it - orders_.begin());
    }

    double at_order(int i, int j) const { return a_(index_of(i), index_of(j)); }

private:
    Eigen::MatrixXd a_;
    std::vector<int> orders_;
    std::vector<double> w_;
    double w0_;
    KernelMethod method_;
    Eigen::VectorXd eigenvalues_;
};

namespace detail {

struct RetainedPoints {
    std::vector<int> orders;
    std::vector<double> w;
};

inline RetainedPoints retain(const DiskPoints& pts, std::span<const int> exclude) {
    detail::require(std::abs(pts.w0) < 1.0, "kernel: subtraction point must lie inside the disk");
    RetainedPoints r;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (std::find(exclude.begin(), exclude.end(), pts.orders[i]) != exclude.end()) continue;
        detail::require(std::abs(pts.w[i]) < 1.0, "kernel: data point must lie inside the disk");
        detail::require(std::abs(pts.w[i] - pts.w0) >= 1e-10,
                        "kernel: order " + std::to_string(pts.orders[i]) + " coincides with the subtraction point");
        r.orders.push_back(pts.orders[i]);
        r.w.push_back(pts.w[i]);
    }
    detail::require(!r.orders.empty(), "kernel: no points retained");
    return r;
}

// ln|e^{i theta} - w| for real w, written without cancellation near the spike.
inline double log_boundary_distance(double theta, double w) {
    if (w >= 0.0) {
        const double s = std::sin(0.5 * theta);
        return 0.5 * std::log((1.0 - w) * (1.0 - w) + 4.0 * w * s * s);
    }
    const double c = std::cos(0.5 * theta);
    return 0.5 * std::log((1.0 + w) * (1.0 + w) - 4.0 * w * c * c);
}

}  // namespace detail

/// Kernel matrix by adaptive Gauss-Legendre quadrature over the unit circle.
/// The integrand is even in theta, so only [0, pi] is integrated.
inline KernelMatrix kernel_matrix_quadrature(const DiskPoints& pts, std::span<const int> exclude = {},
                                             const QuadratureOptions& opt = {}) {
    const auto r = detail::retain(pts, exclude);
    const auto n = static_cast<Eigen::Index>(r.w.size());
    const double w0 = pts.w0;
    Eigen::VectorXd g(n);
    auto integrand = [&](double theta) {
        const double base = detail::log_boundary_distance(theta, w0);
        for (Eigen::Index i = 0; i < n; ++i) g[i] = detail::log_boundary_distance(theta, r.w[i]) - base;
        return Eigen::MatrixXd(g * g.transpose());
    };
    const auto q = integrate_adaptive(integrand, 0.0, std::numbers::pi, n, n, opt);
    return KernelMatrix((4.0 / std::numbers::pi) * q.value, r.orders, r.w, w0, KernelMethod::quadrature);
}

/// Closed form through (1/2pi) int ln|e^{it} - a| ln|e^{it} - b| dt = Li2(ab)/2:
///   A_ij = 2 [Li2(w_i w_j) - Li2(w_i w0) - Li2(w0 w_j) + Li2(w0^2)].
inline KernelMatrix kernel_matrix_dilog(const DiskPoints& pts, std::span<const int> exclude = {}) {
    const auto r = detail::retain(pts, exclude);
    const auto n = static_cast<Eigen::Index>(r.w.size());
    const double w0 = pts.w0;
    const double l00 = dilog(w0 * w0);
    Eigen::VectorXd l0(n);
    for (Eigen::Index i = 0; i < n; ++i) l0[i] = dilog(r.w[i] * w0);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            a(i, j) = a(j, i) = 2.0 * (dilog(r.w[i] * r.w[j]) - l0[i] - l0[j] + l00);
        }
    }
    return KernelMatrix(std::move(a), r.orders, r.w, w0, KernelMethod::dilogarithm);
}

inline KernelMatrix kernel_matrix(const DiskPoints& pts, std::span<const int> exclude = {},
                                  KernelMethod method = KernelMethod::dilogarithm) {
    return method == KernelMethod::quadrature ? kernel_matrix_quadrature(pts, exclude) : kernel_matrix_dilog(pts, exclude);
}

/// Cholesky factor of a kernel matrix, refusing numerically singular input.
class SpdSolver {
public:
    explicit SpdSolver(const KernelMatrix& k) : SpdSolver(k.matrix(), k.condition_number()) {}

    SpdSolver(const Eigen::MatrixXd& a, double condition) : llt_(a), condition_(condition) {
        if (!(condition <= kMaxCondition)) {
            throw NumericalError("kernel matrix numerically singular, condition number " + std::to_string(condition));
        }
        if (llt_.info() != Eigen::Success) throw NumericalError("kernel matrix: Cholesky factorization failed");
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt_.solve(b); }

    /// x^T A^{-1} y.
    double inverse_form(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
        return x.dot(llt_.solve(y));
    }

    double condition_number() const { return condition_; }

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double condition_;
};

/// delta^2_min = d'^T A^{-1} d', the squared minimal boundary norm of an
/// interpolant taking the subtracted values d' at the retained points.
inline double min_norm_noiseless(const KernelMatrix& a, const Eigen::VectorXd& dprime) {
    detail::require(dprime.size() == a.size(), "min_norm_noiseless: vector length does not match the kernel");
    const SpdSolver solver(a);
    return std::max(0.0, solver.inverse_form(dprime, dprime));
}

}  // namespace sac
