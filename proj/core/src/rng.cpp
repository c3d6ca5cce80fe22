#include "smoothcert/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace smoothcert {

namespace {

constexpr double kInversionMeanLimit = 30.0;
constexpr std::uint64_t kBlock = 64;

std::uint64_t binomial_by_inversion(CounterStream& stream, std::uint64_t n, double q) {
    const double u = stream.uniform();
    const double ratio = q / (1.0 - q);
    double pmf = std::exp(static_cast<double>(n) * std::log1p(-q));
    double cdf = pmf;
    std::uint64_t k = 0;
    while (u > cdf && k < n) {
        pmf *= ratio * static_cast<double>(n - k) / static_cast<double>(k + 1);
        ++k;
        cdf += pmf;
    }
    return k;
}

std::uint64_t binomial_by_bernoulli_sum(CounterStream& stream, std::uint64_t n, double p) {
    const auto threshold = static_cast<std::uint64_t>(std::ldexp(p, 64));
    std::uint64_t successes = 0;
    std::uint64_t remaining = n;
    while (remaining > 0) {
        const std::uint64_t block = remaining < kBlock ? remaining : kBlock;
        std::uint64_t hits = 0;
        for (std::uint64_t i = 0; i < block; ++i) hits += stream.next() < threshold ? 1 : 0;
        successes += hits;
        remaining -= block;
    }
    return successes;
}

}  // namespace

std::uint64_t sample_binomial(CounterStream& stream, std::uint64_t n, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial probability must lie in [0, 1]");
    if (n == 0 || p == 0.0) return 0;
    if (p == 1.0) return n;

    const bool flip = p > 0.5;
    const double q = flip ? 1.0 - p : p;
    if (static_cast<double>(n) * q <= kInversionMeanLimit) {
        const std::uint64_t k = binomial_by_inversion(stream, n, q);
        return flip ? n - k : k;
    }
    return binomial_by_bernoulli_sum(stream, n, p);
}

}  // namespace smoothcert
