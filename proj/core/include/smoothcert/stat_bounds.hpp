#pragma once

#include <cstdint>

namespace smoothcert {

/// Which normal quantile a confidence level maps to.
enum class ZConvention {
    two_sided_quantile,  ///< z = Phi^-1(1 - alpha/2)
    one_sided_quantile,  ///< z = Phi^-1(1 - alpha)
};

/// Error rate alpha together with the quantile convention used by the normal-approximation bound.
struct ConfidenceSpec {
    double alpha = 0.001;
    ZConvention z_convention = ZConvention::two_sided_quantile;

    /// Throws std::invalid_argument unless 0 < alpha < 1.
    void validate() const;
    double z() const;
};

/// Observed successes out of n Bernoulli draws. The ratio is always derived.
class ProbEstimate {
public:
    ProbEstimate(std::uint64_t successes, std::uint64_t n);

    std::uint64_t successes() const noexcept { return successes_; }
    std::uint64_t n() const noexcept { return n_; }
    double p_hat() const noexcept { return static_cast<double>(successes_) / static_cast<double>(n_); }

private:
    std::uint64_t successes_;
    std::uint64_t n_;
};

/// The normal-approximation bound assumes at least this many draws.
inline constexpr std::uint64_t kCltMinSamples = 30;

inline bool clt_assumption_holds(std::uint64_t n) noexcept { return n >= kCltMinSamples; }

/// Standard normal CDF. Throws std::invalid_argument for non-finite x.
double normal_cdf(double x);

/// Upper tail 1 - Phi(x), without cancellation for large x.
double normal_sf(double x);

/// Inverse of normal_cdf on the open interval (0, 1).
double normal_quantile(double p);

/// Shore's closed-form quantile approximation, (p^0.135 - (1-p)^0.135) / 0.1975, for p in [0.5, 1).
double shore_quantile(double p);

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
double regularized_incomplete_beta(double x, double a, double b);

/// P[X >= k] for X ~ Binomial(n, p).
double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p);

/// One-sided exact Clopper-Pearson lower bound at level alpha.
///
/// Returns L with P[X >= successes | n, L] = alpha, i.e. the alpha-quantile of
/// Beta(successes, n - successes + 1). The alpha convention of `conf` is used as-is;
/// z_convention does not apply to the exact bound.
double cp_lower_bound(const ProbEstimate& est, const ConfidenceSpec& conf);

/// p_hat - z * sqrt(p_hat (1 - p_hat) / n), clamped to [0, 1].
/// Callers should flag estimates where clt_assumption_holds(n) is false.
double clt_lower_bound(const ProbEstimate& est, const ConfidenceSpec& conf);

}  // namespace smoothcert
