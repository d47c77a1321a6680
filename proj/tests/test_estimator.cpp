#include <gtest/gtest.h>

#include <cmath>

#include "corpus.hpp"
#include "sac/baselines.hpp"
#include "sac/estimator.hpp"

using namespace sac;

namespace {

RenyiDataset flat(double s, int k_max) {
    RenyiDataset d;
    for (int k = 2; k <= k_max; ++k) {
        d.orders.push_back(k);
        d.values.push_back(s);
    }
    return d;
}

}  // namespace

TEST(DiscrepancyValues, ClosedFormCases) {
    const std::vector<int> orders{2, 3, 4};
    const std::vector<double> s{1.0, 0.9, 0.8};
    const auto d = discrepancy_values(s, orders, 0.5);
    EXPECT_NEAR(d[0], 0.5, 1e-15);
    EXPECT_NEAR(d[1], 0.2, 1e-15);
    EXPECT_NEAR(d[2], 0.1, 1e-15);
    const auto d0 = discrepancy_values(s, orders, 0.0);
    EXPECT_NEAR(d0[2], 0.8 / 3.0, 1e-15);
    const std::vector<double> f{0.7, 0.7, 0.7};
    EXPECT_EQ(discrepancy_values(f, orders, 0.7).cwiseAbs().maxCoeff(), 0.0);
    const std::vector<int> bad{1, 2, 3};
    EXPECT_THROW(discrepancy_values(s, bad, 0.0), InvalidArgument);
}

TEST(RenyiDatasetType, Validation) {
    RenyiDataset d = flat(1.0, 4);
    EXPECT_NO_THROW(d.validate());
    RenyiDataset shifted{{3, 4}, {1.0, 1.0}, std::nullopt};
    EXPECT_THROW(shifted.validate(), InvalidArgument);
    RenyiDataset unordered{{2, 4, 3}, {1.0, 1.0, 1.0}, std::nullopt};
    EXPECT_THROW(unordered.validate(), InvalidArgument);
    RenyiDataset asym = flat(1.0, 3);
    Eigen::Matrix2d c;
    c << 1.0, 0.1, 0.2, 1.0;
    asym.covariance = c;
    EXPECT_THROW(asym.validate(), InvalidArgument);
    RenyiDataset indefinite = flat(1.0, 3);
    c << 1.0, 2.0, 2.0, 1.0;
    indefinite.covariance = c;
    EXPECT_THROW(indefinite.validate(), InvalidArgument);
    EXPECT_EQ(flat(1.0, 6).truncated(4).k_max(), 4);
}

TEST(EstimateNoiseless, FlatDataIsExact) {
    for (double s : {0.0, 1.0, 2.5}) {
        const auto e = estimate_noiseless(flat(s, 6), kDefaultConformal);
        EXPECT_NEAR(e.alpha_min, s, 1e-10);
        EXPECT_NEAR(e.delta2_min, 0.0, 1e-10);
    }
}

TEST(EstimateNoiseless, MinimumOfTheScanIsTheClosedForm) {
    const auto corpus = sac::testing::random_corpus(5, 7);
    for (const auto& c : corpus) {
        const auto e = estimate_noiseless(c.data, kDefaultConformal);
        ASSERT_EQ(e.alpha_scan.size(), 61u);
        for (const auto& p : e.alpha_scan) EXPECT_GE(p.delta2, e.delta2_min - 1e-12);
        EXPECT_GT(e.alpha_min, e.alpha_scan.front().alpha);
        EXPECT_LT(e.alpha_min, e.alpha_scan.back().alpha);
    }
}

TEST(EstimateNoiseless, SmallestProblemHasTwoOrders) {
    RenyiDataset d{{2, 3}, {1.2, 1.1}, std::nullopt};
    const auto e = estimate_noiseless(d, kDefaultConformal);
    EXPECT_TRUE(std::isfinite(e.alpha_min));
    EXPECT_NEAR(e.delta2_min, 0.0, 1e-12);
    RenyiDataset one{{2}, {1.0}, std::nullopt};
    EXPECT_THROW(estimate_noiseless(one, kDefaultConformal), InvalidArgument);
}

TEST(EstimateNoiseless, RandomRankFourState) {
    const auto rho = random_density_matrix(8, 4, 11);
    const auto e = estimate_noiseless(sac::testing::exact_renyi(rho, 6), kDefaultConformal);
    const double exact = von_neumann_entropy(rho);
    // first run gave 1.0247 %
    EXPECT_LT(100.0 * std::abs(e.alpha_min - exact) / exact, 1.03);
}

TEST(EstimateNoiseless, TfimHalfChainBeatsBaselines) {
    const auto gs = tfim_ground_state(12, 1.0, 0.5);
    const auto rho = partial_trace(gs.state, first_sites(6));
    const auto data = sac::testing::exact_renyi(rho, 6);
    const double exact = von_neumann_entropy(rho);
    const double sac_err = std::abs(estimate_noiseless(data, kDefaultConformal).alpha_min - exact);
    EXPECT_LT(sac_err, std::abs(chebyshev_extrapolate(data).value - exact));
    EXPECT_LT(sac_err, std::abs(least_squares_poly(data).value - exact));
}

TEST(Chi2, QuadraticFormCases) {
    const Eigen::Vector3d d(0.1, 0.2, 0.3);
    EXPECT_EQ(chi2(d, d, Eigen::Matrix3d::Identity()), 0.0);
    EXPECT_NEAR(chi2(d + Eigen::Vector3d::UnitY(), d, Eigen::Matrix3d::Identity()), 1.0, 1e-15);

    Eigen::Matrix3d c;
    c << 4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0;
    // adjugate / det, det = 18
    Eigen::Matrix3d inv;
    inv << 5.0, -2.0, 1.0, -2.0, 8.0, -4.0, 1.0, -4.0, 11.0;
    inv /= 18.0;
    const Eigen::Vector3d r(1.0, -2.0, 0.5);
    EXPECT_NEAR(chi2(d + r, d, c), r.dot(inv * r), 1e-12);
    EXPECT_THROW(chi2(d, d, Eigen::Matrix3d::Zero()), NumericalError);
}

TEST(SolveConstrained, InactiveConstraint) {
    const Eigen::Vector3d m(0.1, 0.2, 0.1), n(1.0, 1.0, 1.0), sigma(1.0, 2.0, 3.0);
    const auto s = solve_constrained(m, n, sigma, 10.0);
    EXPECT_TRUE(s.constraint_inactive);
    EXPECT_EQ(s.lambda, 0.0);
}

TEST(SolveConstrained, ScalarCaseHasAClosedForm) {
    // n has no weight on the second direction: y0 = m_1, p = (0, m_2/(1 + lambda sigma_2))
    const Eigen::Vector2d m(0.7, 5.0), n(2.0, 0.0), sigma(1.5, 0.25);
    const double chi2_0 = 4.0;
    const auto s = solve_constrained(m, n, sigma, chi2_0);
    const double expected = (std::abs(m[1]) / std::sqrt(chi2_0) - 1.0) / sigma[1];
    EXPECT_NEAR(s.lambda, expected, 1e-9 * expected);
    EXPECT_NEAR(s.y0, m[0] / n[0], 1e-12);
    EXPECT_NEAR(s.chi2, chi2_0, 1e-8);
    EXPECT_FALSE(s.grid_fallback);
}

TEST(SolveConstrained, RejectsInvalidInput) {
    const Eigen::Vector2d m(1.0, 1.0), n(1.0, 1.0);
    EXPECT_THROW(solve_constrained(m, n, Eigen::Vector2d(1.0, 0.0), 1.0), InvalidArgument);
    EXPECT_THROW(solve_constrained(m, n, Eigen::Vector2d(1.0, 1.0), 0.0), InvalidArgument);
    EXPECT_THROW(solve_constrained(m, Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, 1.0), 1.0), InvalidArgument);
}

TEST(EstimateNoisy, FlatDataWithAnyCovariance) {
    RenyiDataset d = flat(1.5, 6);
    const Eigen::MatrixXd g = Eigen::MatrixXd::Random(5, 5);
    d.covariance = 0.01 * g * g.transpose();
    const auto e = estimate_noisy(d, kDefaultConformal);
    EXPECT_NEAR(e.alpha_min, 1.5, 1e-6);
}

TEST(EstimateNoisy, TinyCovarianceReproducesTheClosedForm) {
    const auto corpus = sac::testing::random_corpus(3, 99);
    for (const auto& c : corpus) {
        RenyiDataset d = c.data;
        d.covariance = 1e-12 * Eigen::MatrixXd::Identity(5, 5);
        NoisyOptions opt;
        opt.chi2_0 = 1e-6;
        const auto noisy = estimate_noisy(d, kDefaultConformal, opt);
        const auto exact = estimate_noiseless(c.data, kDefaultConformal);
        EXPECT_NEAR(noisy.alpha_min, exact.alpha_min, 1e-3);
        EXPECT_FALSE(noisy.solver.degenerate);
        EXPECT_TRUE(noisy.solver.noisy);
        EXPECT_GT(noisy.solver.lambda, 0.0);
    }
}

TEST(EstimateNoisy, ZeroCovarianceRoutesToTheClosedForm) {
    const auto c = sac::testing::random_corpus(1, 5).front();
    RenyiDataset d = c.data;
    d.covariance = Eigen::MatrixXd::Zero(5, 5);
    const auto e = estimate_noisy(d, kDefaultConformal);
    EXPECT_TRUE(e.solver.routed_to_noiseless);
    EXPECT_DOUBLE_EQ(e.alpha_min, estimate_noiseless(c.data, kDefaultConformal).alpha_min);
}

TEST(EstimateNoisy, WideEllipsoidReportsTheWeightedFit) {
    // linear data S_k = a + b (k - 1) fits a constant discrepancy exactly
    RenyiDataset d;
    for (int k = 2; k <= 6; ++k) {
        d.orders.push_back(k);
        d.values.push_back(2.0 - 0.1 * (k - 1));
    }
    d.covariance = 0.01 * Eigen::MatrixXd::Identity(5, 5);
    const auto e = estimate_noisy(d, kDefaultConformal);
    EXPECT_TRUE(e.solver.degenerate);
    EXPECT_NEAR(e.alpha_min, 2.0, 1e-9);
    EXPECT_EQ(e.delta2_min, 0.0);
}

TEST(EstimateNoisy, RequiresCovariance) {
    EXPECT_THROW(estimate_noisy(flat(1.0, 4), kDefaultConformal), InvalidArgument);
    RenyiDataset d = flat(1.0, 4);
    d.covariance = Eigen::MatrixXd::Identity(3, 3);
    NoisyOptions opt;
    opt.subtraction = SubtractionPoint::first_point();
    EXPECT_THROW(estimate_noisy(d, kDefaultConformal, opt), InvalidArgument);
}

TEST(EstimateNoisy, ScanMinimumIsNotAboveAnyScannedValue) {
    const auto c = sac::testing::random_corpus(1, 123).front();
    RenyiDataset d = c.data;
    Eigen::VectorXd sd(5);
    for (int i = 0; i < 5; ++i) sd[i] = 0.002 * d.values[i];
    d.covariance = sd.cwiseAbs2().asDiagonal();
    NoisyOptions opt;
    opt.chi2_0 = 0.5;
    const auto e = estimate_noisy(d, kDefaultConformal, opt);
    ASSERT_FALSE(e.alpha_scan.empty());
    for (const auto& p : e.alpha_scan) EXPECT_GE(p.delta2, e.delta2_min - 1e-12);
    EXPECT_GE(e.delta2_min, 0.0);
}

TEST(EstimateSac, DispatchesOnCovariance) {
    const auto c = sac::testing::random_corpus(1, 8).front();
    EXPECT_FALSE(estimate_sac(c.data, kDefaultConformal).solver.noisy);
    RenyiDataset d = c.data;
    d.covariance = 1e-4 * Eigen::MatrixXd::Identity(5, 5);
    EXPECT_TRUE(estimate_sac(d, kDefaultConformal).solver.noisy);
}
