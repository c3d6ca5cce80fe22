#include <cmath>
#include <limits>
#include <stdexcept>

#include <gtest/gtest.h>

#include "smoothcert/stat_bounds.hpp"
#include "support/oracles.hpp"

using namespace smoothcert;

namespace {

constexpr ConfidenceSpec k001{0.001, ZConvention::two_sided_quantile};

}  // namespace

TEST(ConfidenceSpec, RejectsAlphaOutsideOpenUnitInterval) {
    EXPECT_THROW((ConfidenceSpec{0.0}.validate()), std::invalid_argument);
    EXPECT_THROW((ConfidenceSpec{1.0}.validate()), std::invalid_argument);
    EXPECT_THROW((ConfidenceSpec{std::nan("")}.validate()), std::invalid_argument);
    EXPECT_NO_THROW((ConfidenceSpec{0.05}.validate()));
}

TEST(ConfidenceSpec, QuantileConventions) {
    EXPECT_NEAR(k001.z(), oracle::normal_quantile(1 - 0.0005), 1e-12);
    EXPECT_NEAR((ConfidenceSpec{0.001, ZConvention::one_sided_quantile}.z()), oracle::normal_quantile(0.999), 1e-12);
    EXPECT_NEAR(k001.z(), 3.29053, 1e-5);
}

TEST(ProbEstimate, DerivesRatio) {
    const ProbEstimate est(950, 1000);
    EXPECT_DOUBLE_EQ(est.p_hat(), 0.95);
    EXPECT_THROW(ProbEstimate(3, 2), std::invalid_argument);
    EXPECT_THROW(ProbEstimate(0, 0), std::invalid_argument);
}

TEST(NormalCdf, Anchors) {
    EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
    EXPECT_NEAR(normal_cdf(1.2), 0.884930, 1e-6);
    EXPECT_NEAR(normal_cdf(-0.7), 1.0 - normal_cdf(0.7), 1e-15);
    EXPECT_THROW(normal_cdf(std::numeric_limits<double>::infinity()), std::invalid_argument);
    EXPECT_THROW(normal_cdf(std::nan("")), std::invalid_argument);
}

TEST(NormalCdf, MatchesReferenceOnGrid) {
    for (double x = -12.0; x <= 12.0; x += 0.05) {
        EXPECT_NEAR(normal_cdf(x), oracle::normal_cdf(x), 1e-12) << x;
    }
}

TEST(NormalSf, AccurateInFarTail) {
    EXPECT_NEAR(normal_sf(10.0) / 7.61985302416e-24, 1.0, 1e-9);
    EXPECT_NEAR(normal_sf(-1.0), oracle::normal_cdf(1.0), 1e-15);
}

TEST(NormalQuantile, Anchors) {
    EXPECT_DOUBLE_EQ(normal_quantile(0.5), 0.0);
    EXPECT_NEAR(normal_quantile(0.9995), 3.29053, 1e-5);
    EXPECT_NEAR(normal_quantile(normal_cdf(1.3)), 1.3, 1e-9);
    EXPECT_THROW(normal_quantile(0.0), std::invalid_argument);
    EXPECT_THROW(normal_quantile(1.0), std::invalid_argument);
}

TEST(NormalQuantile, MatchesReferenceAcrossTails) {
    for (const double p : {1e-300, 1e-20, 1e-9, 1e-4, 0.02425, 0.1, 0.3, 0.6, 0.9, 0.97575, 0.9999, 1 - 1e-9}) {
        const double ref = oracle::normal_quantile(p);
        EXPECT_NEAR(normal_quantile(p), ref, 1e-12 * std::max(1.0, std::fabs(ref))) << p;
    }
}

TEST(NormalQuantile, RoundTripsThroughCdf) {
    for (double p = 1e-6; p < 1.0; p += 0.0137) {
        EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-10) << p;
    }
}

TEST(ShoreQuantile, Anchors) {
    EXPECT_DOUBLE_EQ(shore_quantile(0.5), 0.0);
    EXPECT_NEAR(shore_quantile(0.95), 1.6493, 1e-4);
    EXPECT_NEAR(shore_quantile(0.75), 0.6713, 1e-4);
    EXPECT_THROW(shore_quantile(0.49), std::invalid_argument);
    EXPECT_THROW(shore_quantile(1.0), std::invalid_argument);
}

TEST(ShoreQuantile, ErrorAgainstExactQuantile) {
    double max_to_95 = 0.0;
    double max_to_9995 = 0.0;
    for (double p = 0.5; p <= 0.9995; p += 1e-4) {
        const double err = std::fabs(shore_quantile(p) - oracle::normal_quantile(p));
        if (p <= 0.95) max_to_95 = std::max(max_to_95, err);
        max_to_9995 = std::max(max_to_9995, err);
    }
    EXPECT_LE(max_to_95, 0.005);
    EXPECT_LE(max_to_9995, 0.05);
}

TEST(IncompleteBeta, MatchesBoost) {
    for (const double a : {0.5, 1.0, 3.0, 40.0, 950.0}) {
        for (const double b : {0.5, 2.0, 51.0, 1000.0}) {
            for (const double x : {0.0, 1e-3, 0.2, 0.5, 0.8, 0.99, 1.0}) {
                EXPECT_NEAR(regularized_incomplete_beta(x, a, b), boost::math::ibeta(a, b, x), 1e-12)
                    << a << ' ' << b << ' ' << x;
            }
        }
    }
}

TEST(BinomialTail, MatchesLogSpaceSum) {
    for (const auto& [k, n, p] : {std::tuple{0ULL, 10ULL, 0.3}, {5ULL, 10ULL, 0.3}, {950ULL, 1000ULL, 0.93},
                                  {10ULL, 10ULL, 0.74}, {11ULL, 10ULL, 0.5}, {500ULL, 5000ULL, 0.1}}) {
        // Both sides go through lgamma, which loses a few digits once n reaches the thousands.
        EXPECT_NEAR(binomial_upper_tail(k, n, p), oracle::binomial_tail(k, n, p), 1e-10) << k << '/' << n;
        if (k >= 1 && k <= n) {
            EXPECT_NEAR(binomial_upper_tail(k, n, p), boost::math::ibeta(double(k), double(n - k + 1), p), 1e-11);
        }
    }
}

TEST(CpLowerBound, Anchors) {
    EXPECT_EQ(cp_lower_bound(ProbEstimate(0, 17), k001), 0.0);
    EXPECT_NEAR(cp_lower_bound(ProbEstimate(10, 10), ConfidenceSpec{0.05}), 0.74113, 1e-5);
    EXPECT_NEAR(cp_lower_bound(ProbEstimate(10, 10), ConfidenceSpec{0.05}), std::pow(0.05, 0.1), 1e-10);
    const double l = cp_lower_bound(ProbEstimate(950, 1000), k001);
    EXPECT_LT(std::fabs(l - 0.9273), 0.005);
    EXPECT_NEAR(l, oracle::cp_lower(950, 1000, 0.001), 1e-9);
}

TEST(CpLowerBound, IgnoresZConvention) {
    const ProbEstimate est(700, 1000);
    EXPECT_EQ(cp_lower_bound(est, {0.01, ZConvention::two_sided_quantile}),
              cp_lower_bound(est, {0.01, ZConvention::one_sided_quantile}));
}

TEST(CpLowerBound, MatchesBruteForceAndBetaQuantile) {
    for (const std::uint64_t n : {1ULL, 7ULL, 30ULL, 100ULL, 1000ULL}) {
        for (std::uint64_t k = 1; k <= n; k += std::max<std::uint64_t>(1, n / 9)) {
            for (const double alpha : {0.05, 0.001}) {
                const double got = cp_lower_bound(ProbEstimate(k, n), ConfidenceSpec{alpha});
                EXPECT_NEAR(got, oracle::cp_lower(k, n, alpha), 1e-9) << k << '/' << n << " a=" << alpha;
                EXPECT_NEAR(got, oracle::cp_lower_beta(k, n, alpha), 1e-9) << k << '/' << n << " a=" << alpha;
            }
        }
    }
}

TEST(CpLowerBound, LargeNStaysFinite) {
    const double l = cp_lower_bound(ProbEstimate(900'000, 1'000'000), k001);
    EXPECT_NEAR(l, oracle::cp_lower_beta(900'000, 1'000'000, 0.001), 1e-9);
}

TEST(CpLowerBound, IsConservativeAtAlpha) {
    for (const auto& [k, n] : {std::pair{3ULL, 10ULL}, {505ULL, 1000ULL}, {95ULL, 100ULL}}) {
        const double l = cp_lower_bound(ProbEstimate(k, n), k001);
        EXPECT_LE(oracle::binomial_tail(k, n, l), 0.001 + 1e-9);
    }
}

TEST(CltLowerBound, Anchors) {
    EXPECT_NEAR(clt_lower_bound(ProbEstimate(950, 1000), k001), 0.92732, 1e-5);
    EXPECT_EQ(clt_lower_bound(ProbEstimate(50, 50), k001), 1.0);
    EXPECT_EQ(clt_lower_bound(ProbEstimate(3, 30), k001), 0.0);
}

TEST(CltLowerBound, FollowsZConvention) {
    const ProbEstimate est(800, 1000);
    const double spread = std::sqrt(0.8 * 0.2 / 1000);
    EXPECT_NEAR(clt_lower_bound(est, {0.01, ZConvention::two_sided_quantile}),
                0.8 - oracle::normal_quantile(0.995) * spread, 1e-12);
    EXPECT_NEAR(clt_lower_bound(est, {0.01, ZConvention::one_sided_quantile}),
                0.8 - oracle::normal_quantile(0.99) * spread, 1e-12);
}

TEST(CltLowerBound, AssumptionThreshold) {
    EXPECT_FALSE(clt_assumption_holds(29));
    EXPECT_TRUE(clt_assumption_holds(30));
}
