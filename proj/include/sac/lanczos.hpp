#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sac/error.hpp"
#include "sac/random.hpp"

namespace sac {

struct EigenPair {
    double value = 0.0;
    Eigen::VectorXd vector;
    double residual = 0.0;
};

struct LanczosOptions {
    int krylov_dim = 120;
    int max_restarts = 60;
    double tolerance = 1e-11;  // residual norm relative to max(1, |theta|)
    std::uint64_t seed = 0x5eed;
};

namespace detail {

// Projects out the span of an orthonormal set, twice for numerical stability.
inline void project_out(Eigen::VectorXd& w, const std::vector<Eigen::VectorXd>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) w -= b.dot(w) * b;
    }
}

template <class Apply>
EigenPair lanczos_lowest(Apply&& apply, Eigen::Index dim, const std::vector<Eigen::VectorXd>& deflate,
                         const LanczosOptions& opt) {
    const Eigen::Index free_dim = dim - static_cast<Eigen::Index>(deflate.size());
    if (free_dim <= 0) throw InvalidArgument("lanczos: no directions left after deflation");
    const int m = static_cast<int>(std::min<Eigen::Index>(opt.krylov_dim, free_dim));

    Rng rng(opt.seed + deflate.size());
    Eigen::VectorXd start(dim);
    for (Eigen::Index i = 0; i < dim; ++i) start[i] = rng.normal();

    Eigen::MatrixXd basis(dim, m);
    Eigen::VectorXd w(dim);
    EigenPair best;

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        project_out(start, deflate);
        const double n0 = start.norm();
        if (n0 == 0.0) throw NumericalError("lanczos: start vector collapsed under deflation");
        basis.col(0) = start / n0;

        std::vector<double> alpha, beta;
        int used = 0;
        for (int j = 0; j < m; ++j) {
            used = j + 1;
            apply(basis.col(j), w);
            project_out(w, deflate);
            const double a = basis.col(j).dot(w);
            alpha.push_back(a);
            // full reorthogonalization against the Krylov basis built so far
            for (int pass = 0; pass < 2; ++pass) {
                w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
            }
            if (j + 1 == m) break;
            const double b = w.norm();
            if (b < 1e-13) break;  // invariant subspace reached
            beta.push_back(b);
            basis.col(j + 1) = w / b;
        }

        Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), used);
        Eigen::VectorXd sub(std::max(used - 1, 0));
        for (int j = 0; j + 1 < used; ++j) sub[j] = beta[j];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
        tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);

        const double theta = tri.eigenvalues()[0];
        Eigen::VectorXd x = basis.leftCols(used) * tri.eigenvectors().col(0);
        project_out(x, deflate);
        x.normalize();
        apply(x, w);
        project_out(w, deflate);
        const double rq = x.dot(w);
        const double res = (w - rq * x).norm();

        best.value = rq;
        best.vector = x;
        best.residual = res;
        if (res <= opt.tolerance * std::max(1.0, std::abs(rq))) return best;
        start = x;
    }
    throw NumericalError("lanczos: not converged, residual " + std::to_string(best.residual));
}

}  // namespace detail

/// Lowest `count` eigenpairs of a real symmetric operator given only its action
/// y = A x. Each pair after the first is found by Lanczos on the orthogonal
/// complement of the previous ones, so exact degeneracies are resolved.
template <class Apply>
std::vector<EigenPair> lanczos_lowest(Apply&& apply, Eigen::Index dim, int count,
                                      const LanczosOptions& opt = {}) {
    std::vector<EigenPair> pairs;
    std::vector<Eigen::VectorXd> found;
    for (int c = 0; c < count && c < dim; ++c) {
        pairs.push_back(detail::lanczos_lowest(apply, dim, found, opt));
        found.push_back(pairs.back().vector);
    }
    return pairs;
}

}  // namespace sac
