#pragma once

#include <cstdint>
#include <optional>

#include "smoothcert/stat_bounds.hpp"

namespace smoothcert {

/// Largest probability fed to the normal quantile when turning a bound into a radius.
inline constexpr double kMaxCertifiableProbability = 1.0 - 1e-9;

/// Noise level, confidence and sample budget of one smoothing run.
struct SmoothingConfig {
    double sigma = 0.5;
    ConfidenceSpec conf{};
    std::uint64_t n = 1000;

    void validate() const;
};

enum class RadiusMethod {
    exact_quantile,   ///< sigma * Phi^-1(p_a - t)
    shore_expansion,  ///< first-order expansion of Shore's approximation in z/sqrt(n)
};

struct RadiusPrediction {
    double p_a = 0.0;
    double t_term = 0.0;           ///< z * sqrt(p_a (1 - p_a) / n)
    double expected_radius = 0.0;  ///< radius expected at the configured n
    double limit_radius = 0.0;     ///< radius as n grows without bound
    RadiusMethod method = RadiusMethod::exact_quantile;
    bool below_threshold = false;  ///< the finite-n formula fell under the certification threshold and was clamped
};

/// Verdict of the early-stopping planner.
struct SamplePlan {
    double p_a_estimate = 0.0;
    double target_radius = 0.0;
    bool achievable_in_limit = false;
    std::optional<std::uint64_t> required_n;  ///< empty when unachievable
    std::uint64_t current_n = 0;
    double limit_radius = 0.0;        ///< exact sigma * Phi^-1(p_a_estimate)
    double limit_radius_shore = 0.0;  ///< Shore closed form, reported only
    double radius_at_current_n = 0.0;

    /// Samples still to draw beyond current_n; zero when already sufficient or unachievable.
    std::uint64_t additional_samples() const noexcept {
        return required_n && *required_n > current_n ? *required_n - current_n : 0;
    }
};

/// sigma * Phi^-1(p_lower) when p_lower >= 0.5, else 0. p_lower is capped at kMaxCertifiableProbability.
double certified_radius(double p_lower, double sigma);

/// True when certified_radius had to cap p_lower.
inline bool radius_saturated(double p_lower) noexcept { return p_lower > kMaxCertifiableProbability; }

/// z * sqrt(p_a (1 - p_a) / n).
double shrinkage_term(double p_a, const ConfidenceSpec& conf, std::uint64_t n);

RadiusPrediction expected_radius(double p_a, const SmoothingConfig& cfg,
                                 RadiusMethod method = RadiusMethod::exact_quantile);

double limit_radius(double p_a, double sigma, RadiusMethod method = RadiusMethod::exact_quantile);

/// Recovers p_a such that the exact expected radius at cfg.n equals observed_radius.
/// Throws SaturatedError when no p_a below one reaches the radius.
double infer_pa(double observed_radius, const SmoothingConfig& cfg);

SamplePlan plan_samples(double p_a_estimate, double sigma, const ConfidenceSpec& conf,
                        double target_radius, std::uint64_t current_n = 0);

}  // namespace smoothcert
