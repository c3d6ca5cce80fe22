#include "smoothcert/stat_bounds.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace smoothcert {

namespace {

constexpr double kCpTolerance = 1e-10;
constexpr int kCpMaxIterations = 200;

// Acklam's rational approximation; only used as the starting point for refinement.
double quantile_initial_guess(double p) {
    static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                             -2.759285104469687e+02, 1.383577518672690e+02,
                                             -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                             -1.556989798598866e+02, 6.680131188771972e+01,
                                             -1.328068155288572e+01};
    static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                             -2.400758277161838e+00, -2.549732539343734e+00,
                                             4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                             2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    auto tail = [&](double q) {
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    };
    if (p < p_low) {
        return tail(std::sqrt(-2.0 * std::log(p)));
    }
    if (p > 1.0 - p_low) {
        return -tail(std::sqrt(-2.0 * std::log1p(-p)));
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    const int max_iterations = 1000 + static_cast<int>(20.0 * std::sqrt(a + b));

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

void ConfidenceSpec::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
}

double ConfidenceSpec::z() const {
    validate();
    return z_convention == ZConvention::two_sided_quantile ? -normal_quantile(alpha / 2.0)
                                                           : -normal_quantile(alpha);
}

ProbEstimate::ProbEstimate(std::uint64_t successes, std::uint64_t n) : successes_(successes), n_(n) {
    if (n == 0) throw std::invalid_argument("sample count must be at least 1");
    if (successes > n) throw std::invalid_argument("successes exceed sample count");
}

double normal_cdf(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("normal_cdf: non-finite input");
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_sf(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("normal_sf: non-finite input");
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
    }
    // Halley refinement against the tail that does not cancel.
    const bool upper = p > 0.5;
    const double target = upper ? 1.0 - p : p;
    double x = quantile_initial_guess(p);
    for (int i = 0; i < 8; ++i) {
        const double err = upper ? target - normal_sf(x) : normal_cdf(x) - target;
        const double u = err / normal_pdf(x);
        const double step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if (std::fabs(step) <= 1e-15 * std::max(1.0, std::fabs(x))) break;
    }
    return x;
}

double shore_quantile(double p) {
    if (!(p >= 0.5 && p < 1.0)) {
        throw std::invalid_argument("shore_quantile: p must lie in [0.5, 1)");
    }
    return (std::pow(p, 0.135) - std::pow(1.0 - p, 0.135)) / 0.1975;
}

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete beta: a, b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("incomplete beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p) {
    if (k == 0) return 1.0;
    if (k > n) return 0.0;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    return regularized_incomplete_beta(p, static_cast<double>(k), static_cast<double>(n - k + 1));
}

double cp_lower_bound(const ProbEstimate& est, const ConfidenceSpec& conf) {
    conf.validate();
    const std::uint64_t k = est.successes();
    const std::uint64_t n = est.n();
    if (k == 0) return 0.0;
    if (k == n) return std::pow(conf.alpha, 1.0 / static_cast<double>(n));

    // The tail P[X >= k | p] is increasing in p; keep `lo` on the conservative side.
    double lo = 0.0;
    double hi = 1.0;
    for (int i = 0; i < kCpMaxIterations && hi - lo > kCpTolerance; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (binomial_upper_tail(k, n, mid) < conf.alpha) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return lo;
}

double clt_lower_bound(const ProbEstimate& est, const ConfidenceSpec& conf) {
    const double p = est.p_hat();
    const double raw = p - conf.z() * std::sqrt(p * (1.0 - p) / static_cast<double>(est.n()));
    return std::clamp(raw, 0.0, 1.0);
}

}  // namespace smoothcert
