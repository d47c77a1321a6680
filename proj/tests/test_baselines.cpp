#include <gtest/gtest.h>

#include <cmath>

#include "sac/baselines.hpp"

using namespace sac;

namespace {

RenyiDataset from_poly(std::initializer_list<double> coeffs, int k_max) {
    RenyiDataset d;
    for (int k = 2; k <= k_max; ++k) {
        double s = 0.0, p = 1.0;
        for (double c : coeffs) {
            s += c * p;
            p *= k;
        }
        d.orders.push_back(k);
        d.values.push_back(s);
    }
    return d;
}

double at_one(std::initializer_list<double> coeffs) {
    double s = 0.0;
    for (double c : coeffs) s += c;
    return s;
}

}  // namespace

TEST(Chebyshev, ReproducesConstantsAndLines) {
    EXPECT_NEAR(chebyshev_extrapolate(from_poly({1.3}, 6)).value, 1.3, 1e-12);
    EXPECT_NEAR(chebyshev_extrapolate(from_poly({2.0, -0.25}, 5)).value, 1.75, 1e-12);
    const auto quartic = from_poly({1.0, 0.2, -0.03, 0.004, -0.0005}, 6);
    const auto e = chebyshev_extrapolate(quartic);
    EXPECT_NEAR(e.value, at_one({1.0, 0.2, -0.03, 0.004, -0.0005}), 1e-10);
    EXPECT_EQ(e.degree, 4);
    EXPECT_EQ(e.method, BaselineMethod::chebyshev);
}

TEST(Chebyshev, NeedsThreeOrders) {
    EXPECT_THROW(chebyshev_extrapolate(from_poly({1.0}, 2)), InvalidArgument);
}

TEST(LeastSquares, ReproducesPolynomialsOfItsDegree) {
    EXPECT_NEAR(least_squares_poly(from_poly({0.8}, 6), 1).value, 0.8, 1e-12);
    const auto e = least_squares_poly(from_poly({1.0, -0.3, 0.02}, 6));
    EXPECT_NEAR(e.value, at_one({1.0, -0.3, 0.02}), 1e-10);
    EXPECT_EQ(e.degree, 2);
    EXPECT_EQ(e.method, BaselineMethod::least_squares);
}

TEST(LeastSquares, FitsInsteadOfInterpolating) {
    RenyiDataset d = from_poly({1.0, -0.1}, 6);
    d.values[2] += 0.05;
    const double fit = least_squares_poly(d, 1).value;
    EXPECT_GT(std::abs(fit - 0.9), 1e-3);
    EXPECT_LT(std::abs(fit - 0.9), 0.05);
}

TEST(LeastSquares, DegreeBounds) {
    const auto d = from_poly({1.0, 0.1}, 6);
    EXPECT_THROW(least_squares_poly(d, 0), InvalidArgument);
    EXPECT_THROW(least_squares_poly(d, 5), InvalidArgument);
    EXPECT_NO_THROW(least_squares_poly(d, 4));
    EXPECT_NO_THROW(least_squares_poly(from_poly({1.0}, 3), 1));
    EXPECT_THROW(least_squares_poly(from_poly({1.0}, 3), 2), InvalidArgument);
}
