#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "smoothcert/radius_model.hpp"

namespace smoothcert {

/// Density kappa1 on [0, 0.5), kappa2 on [0.5, beta), and the normalizing kappa3 on [beta, 1).
struct PiecewiseUniform {
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double beta = 0.5;

    double kappa3() const noexcept { return (1.0 - 0.5 * kappa1 - (beta - 0.5) * kappa2) / (1.0 - beta); }
};

/// Histogram over probabilities. Mass is spread uniformly inside a bin; a zero-width bin is a point mass.
struct EmpiricalHistogram {
    std::vector<double> bin_edges;  ///< sorted, size = masses.size() + 1
    std::vector<double> masses;
};

/// Population model of p_A across input points.
class PADistribution {
public:
    static PADistribution piecewise(double kappa1, double kappa2, double beta);
    /// Uniform on [lower, 1), lower in [0.5, 1).
    static PADistribution uniform_from(double lower);
    static PADistribution empirical(std::vector<double> bin_edges, std::vector<double> masses);

    bool is_piecewise() const noexcept { return std::holds_alternative<PiecewiseUniform>(model_); }
    const PiecewiseUniform* as_piecewise() const noexcept { return std::get_if<PiecewiseUniform>(&model_); }
    const EmpiricalHistogram* as_empirical() const noexcept { return std::get_if<EmpiricalHistogram>(&model_); }

    /// P[p_A >= p].
    double mass_at_or_above(double p) const;
    /// Generalized inverse of the CDF, for u in [0, 1).
    double quantile(double u) const;

private:
    explicit PADistribution(std::variant<PiecewiseUniform, EmpiricalHistogram> model);
    std::variant<PiecewiseUniform, EmpiricalHistogram> model_;
};

/// Radius threshold R0 and its probability p0 = Phi(R0 / sigma).
struct AccuracyQuery {
    double radius_threshold = 0.0;
    double p0 = 0.5;

    static AccuracyQuery at(double radius_threshold, double sigma);
};

/// Population average of the exact finite-n expected radius.
double average_radius(const PADistribution& dist, const SmoothingConfig& cfg);

/// Tabulated ratio-law coefficient: 2 at beta = 0.5, 1.64 for beta in [0.8, 1); empty elsewhere.
std::optional<double> theta_tabulated(double beta);

/// 1 - Theta(beta) z / sqrt(n). Uses theta_numeric when `numeric_theta` is set or beta has no tabulated value.
double ratio_theoretical(const ConfidenceSpec& conf, std::uint64_t n, double beta, bool numeric_theta = false);

/// Relative first-order radius loss per unit 0.135 z / sqrt(n) at a single p_a in (0.5, 1).
double h_function(double p_a);

/// Mean of h over (lower, upper) with lower > 0.5 and upper <= 1.
double h_interval_mean(double lower, double upper = 1.0);

/// 0.135 times the mean of h over (beta, 1).
double theta_numeric(double beta);

/// Mass certified at radius >= R0: ideal uses p_A itself; otherwise the finite-n lower bound approximation.
double certified_accuracy(const PADistribution& dist, const AccuracyQuery& query, const SmoothingConfig& cfg,
                          bool ideal);

/// z / sqrt(n), clamped to 1.
double accuracy_drop_bound(const ConfidenceSpec& conf, std::uint64_t n);

/// Equal-width histogram on [0, 1] normalized to unit mass.
PADistribution fit_empirical_pa(std::span<const double> estimates, std::size_t num_bins = 50);

/// `bin_left,bin_right,mass` CSV. Bins must be contiguous.
PADistribution read_empirical_csv(std::istream& in);
PADistribution read_empirical_csv(const std::filesystem::path& path);
void write_empirical_csv(std::ostream& out, const PADistribution& dist);

/// Parses `piecewise:k1=..,k2=..,beta=..` or `empirical:PATH`.
PADistribution parse_distribution_spec(std::string_view text);

void to_json(nlohmann::json& j, const PADistribution& dist);
/// Accepts {"kind":"piecewise",...}, {"kind":"uniform","lower":...} and
/// {"kind":"empirical","bin_edges":[...],"masses":[...]} or {"kind":"empirical","path":...}.
PADistribution distribution_from_json(const nlohmann::json& j);

}  // namespace smoothcert
