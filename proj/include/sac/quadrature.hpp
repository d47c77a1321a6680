#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "sac/error.hpp"

namespace sac {

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(int n) : nodes(n), weights(n) {
        detail::require(n >= 1, "GaussLegendre: need at least one node");
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            // recompute the derivative at the converged node
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

struct QuadratureOptions {
    int order = 64;            // nodes per panel
    double abs_tol = 1e-12;    // absolute tolerance on the whole integral, per component
    int max_depth = 60;
};

struct QuadratureResult {
    Eigen::MatrixXd value;
    double error_estimate = 0.0;
    int panels = 0;
};

/// Adaptive panel Gauss-Legendre for a matrix-valued integrand
/// f(theta) -> Eigen::MatrixXd of fixed shape. Each panel is compared with its
/// two halves and bisected until the difference is within its share of the
/// tolerance, which drives dyadic refinement toward integrable log spikes.
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, Eigen::Index rows, Eigen::Index cols,
                                    const QuadratureOptions& opt = {}) {
    const GaussLegendre gl(opt.order);
    auto panel = [&](double lo, double hi) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(rows, cols);
        const double half = 0.5 * (hi - lo);
        const double mid = 0.5 * (hi + lo);
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) acc += gl.weights[i] * f(mid + half * gl.nodes[i]);
        return Eigen::MatrixXd(acc * half);
    };

    QuadratureResult out;
    out.value = Eigen::MatrixXd::Zero(rows, cols);
    const double total = b - a;

    struct Job {
        double lo, hi;
        Eigen::MatrixXd whole;
        int depth;
    };
    std::vector<Job> stack;
    stack.push_back({a, b, panel(a, b), 0});
    while (!stack.empty()) {
        Job job = std::move(stack.back());
        stack.pop_back();
        const double mid = 0.5 * (job.lo + job.hi);
        Eigen::MatrixXd left = panel(job.lo, mid);
        Eigen::MatrixXd right = panel(mid, job.hi);
        const double diff = (left + right - job.whole).cwiseAbs().maxCoeff();
        const double share = opt.abs_tol * (job.hi - job.lo) / total;
        if (diff <= share || job.depth >= opt.max_depth) {
            if (diff > share) {
                throw NumericalError("integrate_adaptive: no convergence, achieved tolerance " + std::to_string(diff));
            }
            out.value += left + right;
            out.error_estimate += diff;
            out.panels += 2;
            continue;
        }
        stack.push_back({job.lo, mid, std::move(left), job.depth + 1});
        stack.push_back({mid, job.hi, std::move(right), job.depth + 1});
    }
    return out;
}

}  // namespace sac
