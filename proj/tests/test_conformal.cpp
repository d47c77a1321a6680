#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "corpus.hpp"
#include "json.hpp"
#include "sac/conformal.hpp"
#include "sac/kernel.hpp"
#include "sac/estimator.hpp"

using namespace sac;

TEST(MapToDisk, VonNeumannPointGoesToMinusOne) {
    for (double eps : {0.5, 1.0, 4.0}) {
        for (double eta : {0.25, 1.0, 2.0}) {
            const auto w = map_to_disk(std::complex<double>(1.0, 0.0), {eps, eta});
            EXPECT_NEAR(w.real(), -1.0, 1e-15);
            EXPECT_NEAR(w.imag(), 0.0, 1e-15);
            EXPECT_EQ(map_to_disk(1.0, {eps, eta}), -1.0);
        }
    }
}

TEST(MapToDisk, RealOrdersLandOnTheRealInterval) {
    const ConformalParams p{1.0, 1.0};
    const double s = std::sinh(1.0);
    EXPECT_NEAR(map_to_disk(2.0, p), (s - 1.0) / (s + 1.0), 1e-15);
    const auto w = map_to_disk(std::complex<double>(2.0, 0.0), p);
    EXPECT_NEAR(w.real(), (s - 1.0) / (s + 1.0), 1e-15);
    EXPECT_EQ(w.imag(), 0.0);
}

TEST(MapToDisk, LargeOrdersDoNotOverflow) {
    const ConformalParams p{0.1, 0.5};
    const double w = map_to_disk(400.0, p);
    EXPECT_LE(w, 1.0);
    EXPECT_GT(w, 0.999);
    // the image rounds onto the boundary, which the kernel refuses
    EXPECT_THROW(kernel_matrix(map_orders({2, 400}, p, SubtractionPoint::midpoint())), InvalidArgument);
    EXPECT_TRUE(std::isfinite(map_to_disk(std::complex<double>(400.0, 0.01), p).real()));
}

TEST(MapToDisk, RejectsInvalidInput) {
    EXPECT_THROW(map_to_disk(0.5, {1.0, 1.0}), InvalidArgument);
    EXPECT_THROW(ConformalParams({0.0, 1.0}).validate(), InvalidArgument);
    EXPECT_THROW(ConformalParams({1.0, -1.0}).validate(), InvalidArgument);
}

TEST(MapDataPoints, FirstPointRule) {
    const auto pts = map_data_points(6, {1.0, 1.0}, SubtractionPoint::first_point());
    ASSERT_EQ(pts.size(), 5u);
    EXPECT_EQ(pts.orders.front(), 2);
    EXPECT_EQ(pts.orders.back(), 6);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_GT(pts.w[i], 0.0);
        EXPECT_LT(pts.w[i], 1.0);
        if (i) EXPECT_GT(pts.w[i], pts.w[i - 1]);
    }
    EXPECT_EQ(pts.w0, pts.w[0]);
    EXPECT_EQ(pts.w_target, -1.0);
    EXPECT_TRUE(pts.w0_coincides());
}

TEST(MapDataPoints, MidpointAndExplicitRules) {
    const auto mid = map_data_points(5, {2.0, 0.5}, SubtractionPoint::midpoint());
    EXPECT_NEAR(mid.w0, 0.5 * (mid.at_order(2) + mid.at_order(5)), 1e-15);
    EXPECT_FALSE(mid.w0_coincides());
    const auto at = map_data_points(3, {2.0, 0.5}, SubtractionPoint::at(-0.3));
    EXPECT_EQ(at.size(), 2u);
    EXPECT_EQ(at.w0, -0.3);
    EXPECT_THROW(map_data_points(5, {2.0, 0.5}, SubtractionPoint::at(1.0)), InvalidArgument);
    EXPECT_THROW(map_data_points(5, {2.0, 0.5}, SubtractionPoint::at(-1.5)), InvalidArgument);
    EXPECT_THROW(map_data_points(2, {2.0, 0.5}, SubtractionPoint::first_point()), InvalidArgument);
    EXPECT_THROW(mid.at_order(7), InvalidArgument);
}

TEST(MapDataPoints, GoldenValues) {
    // high-precision evaluation of the map at eps = 2, eta = 1/2
    const double golden[] = {0.020659487297854918, 0.40305677682520186, 0.6196676629172011, 0.75768504355064925,
                             0.84733301030607544};
    const auto pts = map_data_points(6, {2.0, 0.5}, SubtractionPoint::first_point());
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(pts.w[i], golden[i], 1e-15);
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json read_defaults() {
    std::ifstream in(std::string(SAC_CONFIG_DIR) + "/conformal_defaults.json");
    return nlohmann::json::parse(in);
}

}  // namespace

TEST(ConformalDefaults, RecordedFileMatchesCompiledDefaults) {
    const auto j = read_defaults();
    EXPECT_EQ(j.at("epsilon").get<double>(), kDefaultConformal.epsilon);
    EXPECT_EQ(j.at("eta").get<double>(), kDefaultConformal.eta);
}

// Re-runs the selection sweep that produced the defaults.
TEST(ConformalDefaults, SweepSelectsTheRecordedParameters) {
    const auto j = read_defaults();
    const auto& sel = j.at("selection");
    const auto corpus = sac::testing::random_corpus(sel.at("corpus").at("states").get<int>(),
                                               sel.at("corpus").at("seed").get<std::uint64_t>());
    double best = 1e300;
    ConformalParams arg{};
    for (double eps : sel.at("grid").at("epsilon").get<std::vector<double>>()) {
        for (double eta : sel.at("grid").at("eta").get<std::vector<double>>()) {
            std::vector<double> errs;
            for (const auto& e : corpus) {
                const double a = estimate_noiseless(e.data, {eps, eta}).alpha_min;
                errs.push_back(100.0 * std::abs(a - e.von_neumann) / e.von_neumann);
            }
            const double m = median(errs);
            if (m < best) {
                best = m;
                arg = {eps, eta};
            }
        }
    }
    EXPECT_EQ(arg.epsilon, kDefaultConformal.epsilon);
    EXPECT_EQ(arg.eta, kDefaultConformal.eta);
}
