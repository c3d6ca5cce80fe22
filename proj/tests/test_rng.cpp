#include <cmath>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "smoothcert/rng.hpp"
#include "support/oracles.hpp"

using namespace smoothcert;

namespace {

double binomial_pmf(std::uint64_t k, std::uint64_t n, double p) {
    const double nn = static_cast<double>(n);
    const double kk = static_cast<double>(k);
    return std::exp(std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) + kk * std::log(p) +
                    (nn - kk) * std::log1p(-p));
}

// Pearson statistic over cells with expected count >= 5, pooling the rest into one cell.
double chi_square(const std::vector<std::uint64_t>& observed, std::uint64_t n, double p, std::uint64_t draws,
                  int& dof) {
    double stat = 0.0;
    double pooled_obs = 0.0;
    double pooled_exp = 0.0;
    dof = -1;
    for (std::uint64_t k = 0; k <= n; ++k) {
        const double expected = static_cast<double>(draws) * binomial_pmf(k, n, p);
        const double obs = static_cast<double>(observed[k]);
        if (expected >= 5.0) {
            stat += (obs - expected) * (obs - expected) / expected;
            ++dof;
        } else {
            pooled_obs += obs;
            pooled_exp += expected;
        }
    }
    if (pooled_exp > 0.0) {
        stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
        ++dof;
    }
    return stat;
}

}  // namespace

TEST(StableHash, KnownFnv1aValues) {
    EXPECT_EQ(stable_hash(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(stable_hash("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(stable_hash("foobar"), 0x85944171f73967e8ULL);
}

TEST(DeriveSeed, SeparatesSalts) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t salt = 0; salt < 1000; ++salt) seen.insert(derive_seed(42, salt));
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_NE(derive_seed(std::uint64_t{1}, std::uint64_t{2}), derive_seed(std::uint64_t{2}, std::uint64_t{1}));
    EXPECT_NE(derive_seed(7, 0.5), derive_seed(7, 0.25));
}

TEST(CounterStream, RandomAccessMatchesSequential) {
    CounterStream a(99);
    const CounterStream b(99);
    for (std::uint64_t i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.at(i));
    EXPECT_EQ(a.counter(), 100u);
}

TEST(CounterStream, UniformRangeAndMean) {
    CounterStream s(5);
    double sum = 0.0;
    constexpr int count = 200'000;
    for (int i = 0; i < count; ++i) {
        const double u = s.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / count, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / count));
}

TEST(SampleBinomial, DegenerateProbabilities) {
    CounterStream s(1);
    EXPECT_EQ(sample_binomial(s, 100, 0.0), 0u);
    EXPECT_EQ(sample_binomial(s, 100, 1.0), 100u);
    EXPECT_EQ(sample_binomial(s, 0, 0.3), 0u);
    EXPECT_THROW(sample_binomial(s, 10, 1.5), std::invalid_argument);
    EXPECT_THROW(sample_binomial(s, 10, std::nan("")), std::invalid_argument);
}

TEST(SampleBinomial, Deterministic) {
    CounterStream a(1234);
    CounterStream b(1234);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_binomial(a, 1000, 0.9), sample_binomial(b, 1000, 0.9));
}

// Goodness of fit on both generation paths: inversion (n * min(p, 1 - p) <= 30) and Bernoulli sums.
class BinomialFit : public ::testing::TestWithParam<std::pair<std::uint64_t, double>> {};

TEST_P(BinomialFit, MatchesExactPmf) {
    const auto [n, p] = GetParam();
    constexpr std::uint64_t draws = 40'000;
    std::vector<std::uint64_t> observed(n + 1, 0);
    CounterStream s(derive_seed(2024, static_cast<std::uint64_t>(n)));
    for (std::uint64_t i = 0; i < draws; ++i) ++observed[sample_binomial(s, n, p)];
    int dof = 0;
    const double stat = chi_square(observed, n, p, draws, dof);
    ASSERT_GT(dof, 0);
    // Upper 0.1% point of chi-square via the Wilson-Hilferty approximation.
    const double z = 3.0902;
    const double d = static_cast<double>(dof);
    const double critical = d * std::pow(1.0 - 2.0 / (9.0 * d) + z * std::sqrt(2.0 / (9.0 * d)), 3);
    EXPECT_LT(stat, critical) << "n=" << n << " p=" << p << " dof=" << dof;
}

INSTANTIATE_TEST_SUITE_P(Paths, BinomialFit,
                         ::testing::Values(std::pair{10ULL, 0.3}, std::pair{50ULL, 0.95}, std::pair{100ULL, 0.6},
                                           std::pair{400ULL, 0.9}, std::pair{1000ULL, 0.02}));

TEST(SampleBinomial, MomentsAtLargeN) {
    constexpr int draws = 4000;
    CounterStream s(77);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double k = static_cast<double>(sample_binomial(s, 10'000, 0.9));
        sum += k;
        sum_sq += k * k;
    }
    const double mean = sum / draws;
    const double var = sum_sq / draws - mean * mean;
    EXPECT_NEAR(mean, 9000.0, 4.0 * std::sqrt(900.0 / draws));
    EXPECT_NEAR(var / 900.0, 1.0, 0.1);
}
