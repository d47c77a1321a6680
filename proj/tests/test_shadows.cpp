#include <gtest/gtest.h>

#include <cmath>

#include "naive_ustat.hpp"
#include "sac/shadows.hpp"

using namespace sac;

namespace {

double frame_potential(int t) {
    const auto& g = single_qubit_cliffords();
    double s = 0.0;
    for (const auto& u : g) {
        for (const auto& v : g) s += std::pow(std::abs((u.adjoint() * v).trace()), 2 * t);
    }
    return s / static_cast<double>(g.size() * g.size());
}

BatchShadowSet batches_of(std::vector<CMatrix> m) {
    BatchShadowSet s;
    s.qubits = static_cast<int>(std::log2(m.front().rows()));
    s.batches = std::move(m);
    return s;
}

}  // namespace

TEST(CliffordGroup, TwentyFourDistinctUnitaries) {
    const auto& g = single_qubit_cliffords();
    ASSERT_EQ(g.size(), 24u);
    for (const auto& u : g) EXPECT_LT((u * u.adjoint() - Matrix2c::Identity()).cwiseAbs().maxCoeff(), 1e-14);
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            // distinct up to a global phase
            EXPECT_LT(std::abs((g[i].adjoint() * g[j]).trace()), 2.0 - 1e-9);
        }
    }
}

TEST(CliffordGroup, IsAUnitaryThreeDesign) {
    // Haar frame potentials on one qubit are 2, 5 for t = 2, 3
    EXPECT_NEAR(frame_potential(2), 2.0, 1e-12);
    EXPECT_NEAR(frame_potential(3), 5.0, 1e-12);
    EXPECT_GT(frame_potential(4), 14.0 + 1e-6);
}

TEST(SampleShadows, SingleShotShadowsHaveUnitTrace) {
    const auto rho = random_density_matrix(8, 2, 1);
    const auto shadows = sample_shadows(rho, 50, 1, 3);
    ASSERT_EQ(shadows.size(), 50u);
    for (const auto& s : shadows) {
        EXPECT_NEAR(s.trace().real(), 1.0, 1e-12);
        EXPECT_NEAR(s.trace().imag(), 0.0, 1e-12);
        EXPECT_LT((s - s.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(SampleShadows, RecordsAreDeterministicAndComplete) {
    const auto rho = random_density_matrix(4, 4, 2);
    const auto a = sample_shadow_records(rho, 20, 30, 77);
    const auto b = sample_shadow_records(rho, 20, 30, 77);
    ASSERT_EQ(a.records.size(), 20u);
    for (std::size_t r = 0; r < a.records.size(); ++r) {
        EXPECT_EQ(a.records[r].cliffords, b.records[r].cliffords);
        EXPECT_EQ(a.records[r].counts, b.records[r].counts);
        int total = 0;
        for (const auto& [bits, count] : a.records[r].counts) total += count;
        EXPECT_EQ(total, 30);
    }
    const auto c = sample_shadow_records(rho, 20, 30, 78);
    bool differs = false;
    for (std::size_t r = 0; r < c.records.size(); ++r) differs = differs || c.records[r].counts != a.records[r].counts;
    EXPECT_TRUE(differs);
}

TEST(SampleShadows, MeanShadowIsUnbiased) {
    const auto psi = random_pure_state(5, 4);
    const std::vector<int> sites{0, 2, 3};
    const auto rho = partial_trace(psi, sites);
    const int n = 20000;
    const auto shadows = sample_shadows(psi, sites, n, 1, 5);
    CMatrix mean = CMatrix::Zero(8, 8);
    Eigen::MatrixXd sq_re = Eigen::MatrixXd::Zero(8, 8), sq_im = Eigen::MatrixXd::Zero(8, 8);
    for (const auto& s : shadows) {
        mean += s;
        sq_re += s.real().cwiseAbs2();
        sq_im += s.imag().cwiseAbs2();
    }
    mean /= n;
    for (Eigen::Index i = 0; i < 8; ++i) {
        for (Eigen::Index j = 0; j < 8; ++j) {
            const double se_re = std::sqrt((sq_re(i, j) / n - std::pow(mean(i, j).real(), 2)) / n);
            const double se_im = std::sqrt((sq_im(i, j) / n - std::pow(mean(i, j).imag(), 2)) / n);
            EXPECT_LT(std::abs(mean(i, j).real() - rho.matrix()(i, j).real()), 5.0 * se_re + 1e-12);
            EXPECT_LT(std::abs(mean(i, j).imag() - rho.matrix()(i, j).imag()), 5.0 * se_im + 1e-12);
        }
    }
}

TEST(SampleShadows, RejectsLargeSubsystems) {
    const auto psi = random_pure_state(8, 1);
    const auto seven = first_sites(7);
    EXPECT_THROW(sample_shadows(psi, seven, 2, 2, 1), InvalidArgument);
    EXPECT_THROW(sample_shadows(random_density_matrix(6, 2, 1), 2, 2, 1), InvalidArgument);
}

TEST(BatchShadows, GroupingAndValidation) {
    const auto rho = random_density_matrix(4, 2, 9);
    const auto shadows = sample_shadows(rho, 25, 10, 1);
    const auto same = batch_shadows(shadows, 25);
    for (int i = 0; i < 25; ++i) EXPECT_EQ(same.batches[i], shadows[i]);

    CMatrix global = CMatrix::Zero(4, 4);
    for (int i = 0; i < 24; ++i) global += shadows[i];
    global /= 24.0;
    const auto eight = batch_shadows(shadows, 8);  // 25 = 8 * 3 + 1, the last shadow is dropped
    CMatrix reavg = CMatrix::Zero(4, 4);
    for (const auto& b : eight.batches) {
        reavg += b / 8.0;
        EXPECT_NEAR(b.trace().real(), 1.0, 1e-8);
        EXPECT_LT((b - b.adjoint()).cwiseAbs().maxCoeff(), 1e-10);
    }
    EXPECT_LT((reavg - global).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(eight.qubits, 2);

    EXPECT_EQ(batch_shadows(shadows, 1).size(), 1);
    EXPECT_THROW(batch_shadows(shadows, 26), InvalidArgument);
    EXPECT_THROW(batch_shadows(shadows, 0), InvalidArgument);
    EXPECT_THROW(u_statistic_moment(batch_shadows(shadows, 1), 2), InvalidArgument);
}

TEST(UStatistic, IdenticalBatchesGiveSpectralPowers) {
    const auto rho = random_density_matrix(8, 3, 21);
    const auto set = batches_of(std::vector<CMatrix>(7, rho.matrix()));
    for (int k = 2; k <= 6; ++k) {
        double expected = 0.0;
        for (double x : rho.spectrum()) expected += std::pow(std::max(x, 0.0), k);
        EXPECT_NEAR(u_statistic_moment(set, k), expected, 1e-13);
    }
}

TEST(UStatistic, ThreeBatchPairsByHand) {
    const auto rho = random_density_matrix(4, 4, 1);
    const auto shadows = sample_shadows(rho, 3, 5, 8);
    const auto set = batch_shadows(shadows, 3);
    double sum = 0.0;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            if (a != b) sum += (shadows[a] * shadows[b]).trace().real();
        }
    }
    EXPECT_NEAR(u_statistic_moment(set, 2), sum / 6.0, 1e-13);
    EXPECT_THROW(u_statistic_moment(set, 4), InvalidArgument);
    EXPECT_THROW(u_statistic_moment(set, 1), InvalidArgument);
}

TEST(UStatistic, MatchesNaiveEnumeration) {
    const auto rho = random_density_matrix(4, 2, 5);
    const auto set = batch_shadows(sample_shadows(rho, 60, 20, 12), 6);
    const auto table = u_statistic_moments(set, 5);
    for (int k = 2; k <= 5; ++k) EXPECT_NEAR(table.p[k], sac::testing::naive_moment(set.batches, k), 1e-12) << k;
}

TEST(RenyiFromMoments, ClosedFormsAndDroppedOrders) {
    const auto t = renyi_from_moments({{2, 3, 4}, {1.0, 0.1, 0.05}});
    EXPECT_EQ(t.values[0], 0.0);
    EXPECT_NEAR(t.values[1], std::log2(0.1) / -2.0, 1e-15);
    EXPECT_NEAR(renyi_from_moments({{2}, {0.25}}).values[0], 2.0, 1e-15);

    const auto cut = renyi_from_moments({{2, 3, 4, 5}, {0.5, 0.2, -0.01, 0.03}});
    EXPECT_EQ(cut.orders, (std::vector<int>{2, 3}));
    EXPECT_EQ(cut.dropped, (std::vector<int>{4, 5}));
}

TEST(Jackknife, IdenticalBatchesHaveZeroCovariance) {
    const auto rho = random_density_matrix(4, 3, 2);
    const auto jk = jackknife(batches_of(std::vector<CMatrix>(6, rho.matrix())), 4);
    ASSERT_TRUE(jk.dataset.covariance.has_value());
    EXPECT_LT(jk.dataset.covariance->cwiseAbs().maxCoeff(), 1e-24);
    for (int k = 2; k <= 4; ++k) EXPECT_NEAR(jk.dataset.values[k - 2], renyi_entropy(rho, k), 1e-10);
}

TEST(Jackknife, ReplicatesMatchDirectRecomputation) {
    const auto rho = random_density_matrix(4, 2, 3);
    const auto set = batch_shadows(sample_shadows(rho, 40, 50, 4), 4);
    const auto jk = jackknife(set, 2);
    ASSERT_EQ(jk.replicates_dropped, 0);
    std::vector<double> reps;
    for (int b = 0; b < 4; ++b) {
        std::vector<CMatrix> rest;
        for (int j = 0; j < 4; ++j) {
            if (j != b) rest.push_back(set.batches[j]);
        }
        const double p = sac::testing::naive_moment(rest, 2);
        EXPECT_NEAR(jk.moments.leave_one_out(2, b), p, 1e-12);
        reps.push_back(-std::log2(p));
    }
    double mean = 0.0;
    for (double r : reps) mean += r / 4.0;
    double var = 0.0;
    for (double r : reps) var += (r - mean) * (r - mean);
    var *= 3.0 / 4.0;
    const double full = -std::log2(sac::testing::naive_moment(set.batches, 2));
    EXPECT_NEAR(jk.dataset.values[0], 4.0 * full - 3.0 * mean, 1e-12);
    EXPECT_NEAR((*jk.dataset.covariance)(0, 0), var, 1e-12);
}

TEST(Jackknife, CovarianceIsSymmetricPositiveSemidefinite) {
    const auto rho = random_density_matrix(8, 4, 6);
    const auto jk = jackknife(batch_shadows(sample_shadows(rho, 120, 40, 9), 10), 5);
    const auto& c = *jk.dataset.covariance;
    EXPECT_EQ(c, c.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * es.eigenvalues().maxCoeff());
    EXPECT_NO_THROW(jk.dataset.validate());
}

TEST(Jackknife, NeedsMoreBatchesThanOrders) {
    const auto rho = random_density_matrix(4, 2, 3);
    const auto set = batch_shadows(sample_shadows(rho, 40, 5, 4), 5);
    EXPECT_THROW(jackknife(set, 5), InvalidArgument);
    EXPECT_NO_THROW(jackknife(set, 4));
}
