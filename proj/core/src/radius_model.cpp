#include "smoothcert/radius_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "smoothcert/errors.hpp"

namespace smoothcert {

namespace {

constexpr double kShoreScale = 1.0 / 0.1975;
constexpr double kShoreExponent = 0.135;

constexpr double kInferDamping = 0.5;
constexpr int kInferMaxIterations = 200;
constexpr double kInferTolerance = 1e-12;

void require_validity_region(double p_a, const char* what) {
    if (!(p_a >= 0.5 && p_a < 1.0)) {
        throw std::invalid_argument(std::string(what) + ": p_a must lie in [0.5, 1)");
    }
}

void require_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
}

// p - t(p); increasing on [0.5, 1).
double discounted(double p, const ConfidenceSpec& conf, std::uint64_t n) {
    return p - shrinkage_term(p, conf, n);
}

}  // namespace

void SmoothingConfig::validate() const {
    require_sigma(sigma);
    conf.validate();
    if (n == 0) throw std::invalid_argument("sample count must be at least 1");
}

double certified_radius(double p_lower, double sigma) {
    require_sigma(sigma);
    if (!(p_lower >= 0.0 && p_lower <= 1.0)) throw std::invalid_argument("p_lower must lie in [0, 1]");
    if (p_lower < 0.5) return 0.0;
    return sigma * normal_quantile(std::min(p_lower, kMaxCertifiableProbability));
}

double shrinkage_term(double p_a, const ConfidenceSpec& conf, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("sample count must be at least 1");
    return conf.z() * std::sqrt(p_a * (1.0 - p_a) / static_cast<double>(n));
}

double limit_radius(double p_a, double sigma, RadiusMethod method) {
    require_validity_region(p_a, "limit_radius");
    require_sigma(sigma);
    if (method == RadiusMethod::shore_expansion) return sigma * shore_quantile(p_a);
    return certified_radius(p_a, sigma);
}

RadiusPrediction expected_radius(double p_a, const SmoothingConfig& cfg, RadiusMethod method) {
    require_validity_region(p_a, "expected_radius");
    cfg.validate();

    RadiusPrediction out;
    out.p_a = p_a;
    out.method = method;
    out.t_term = shrinkage_term(p_a, cfg.conf, cfg.n);
    out.limit_radius = limit_radius(p_a, cfg.sigma, method);

    if (method == RadiusMethod::exact_quantile) {
        const double usable = p_a - out.t_term;
        out.below_threshold = usable < 0.5;
        out.expected_radius = out.below_threshold ? 0.0 : certified_radius(usable, cfg.sigma);
    } else {
        const double q = 1.0 - p_a;
        const double shrink = kShoreExponent * cfg.conf.z() / std::sqrt(static_cast<double>(cfg.n));
        const double correction = std::pow(p_a, kShoreExponent - 1.0 + 0.5) * std::sqrt(q) +
                                  std::sqrt(p_a) * std::pow(q, kShoreExponent - 0.5);
        const double value = kShoreScale * cfg.sigma *
                             (std::pow(p_a, kShoreExponent) - std::pow(q, kShoreExponent) - shrink * correction);
        out.below_threshold = value < 0.0;
        out.expected_radius = std::max(value, 0.0);
    }
    return out;
}

double infer_pa(double observed_radius, const SmoothingConfig& cfg) {
    cfg.validate();
    if (!(observed_radius >= 0.0) || !std::isfinite(observed_radius)) {
        throw std::invalid_argument("observed radius must be a finite non-negative length");
    }
    const double target = normal_cdf(observed_radius / cfg.sigma);
    const double lo_edge = 0.5;
    const double hi_edge = kMaxCertifiableProbability;
    if (discounted(hi_edge, cfg.conf, cfg.n) < target) {
        throw SaturatedError("radius " + std::to_string(observed_radius) +
                             " is unreachable for any p_a < 1 at n = " + std::to_string(cfg.n));
    }

    auto residual = [&](double p) { return discounted(p, cfg.conf, cfg.n) - target; };

    // Damped fixed point p <- target + t(p).
    double p = std::clamp(target, lo_edge, hi_edge);
    for (int i = 0; i < kInferMaxIterations; ++i) {
        if (std::fabs(residual(p)) <= kInferTolerance) return p;
        const double next = target + shrinkage_term(p, cfg.conf, cfg.n);
        p = std::clamp((1.0 - kInferDamping) * p + kInferDamping * next, lo_edge, hi_edge);
    }

    double lo = lo_edge;
    double hi = hi_edge;
    while (hi - lo > 1e-15) {
        const double mid = 0.5 * (lo + hi);
        if (residual(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (mid == lo && mid == hi) break;
    }
    return 0.5 * (lo + hi);
}

SamplePlan plan_samples(double p_a_estimate, double sigma, const ConfidenceSpec& conf, double target_radius,
                        std::uint64_t current_n) {
    require_validity_region(p_a_estimate, "plan_samples");
    require_sigma(sigma);
    conf.validate();
    if (!(target_radius > 0.0) || !std::isfinite(target_radius)) {
        throw std::invalid_argument("target radius must be positive");
    }

    SamplePlan plan;
    plan.p_a_estimate = p_a_estimate;
    plan.target_radius = target_radius;
    plan.current_n = current_n;
    plan.limit_radius = limit_radius(p_a_estimate, sigma, RadiusMethod::exact_quantile);
    plan.limit_radius_shore = limit_radius(p_a_estimate, sigma, RadiusMethod::shore_expansion);
    if (current_n > 0) {
        plan.radius_at_current_n =
            expected_radius(p_a_estimate, {sigma, conf, current_n}, RadiusMethod::exact_quantile).expected_radius;
    }

    plan.achievable_in_limit = plan.limit_radius > target_radius;
    if (!plan.achievable_in_limit) return plan;

    const double p0 = normal_cdf(target_radius / sigma);
    const double gap = p_a_estimate - p0;
    const double z = conf.z();
    const double raw = std::ceil(z * z * p_a_estimate * (1.0 - p_a_estimate) / (gap * gap));
    constexpr double n_cap = 1e18;
    std::uint64_t n = raw >= n_cap ? static_cast<std::uint64_t>(n_cap) : static_cast<std::uint64_t>(std::max(raw, 1.0));

    // Guard against rounding in the closed form.
    while (n < static_cast<std::uint64_t>(n_cap) &&
           expected_radius(p_a_estimate, {sigma, conf, n}, RadiusMethod::exact_quantile).expected_radius <
               target_radius) {
        ++n;
    }
    plan.required_n = n;
    return plan;
}

}  // namespace smoothcert
