#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "smoothcert/certify.hpp"
#include "smoothcert/population.hpp"

namespace smoothcert {

inline constexpr std::string_view kToolkitVersion = "1.0.0";

/// Axes and budget of a simulated sweep.
struct SweepGrid {
    std::vector<double> p_list;          ///< point probabilities (bound comparison)
    std::optional<PADistribution> dist;  ///< population of p_A (ratio and accuracy experiments)
    std::vector<std::uint64_t> n_list;
    std::vector<double> sigma_list{0.5};
    double alpha = 0.001;
    ZConvention z_convention = ZConvention::two_sided_quantile;  ///< for the normal-approximation bound and predictions
    std::uint64_t trials = 100;
    std::uint64_t points_per_cell = 2000;
    std::uint64_t global_seed = 0;
    BoundMethod bound_method = BoundMethod::clopper_pearson;
    std::vector<double> radius_grid;  ///< accuracy experiment; empty selects the default grid per sigma
    std::size_t parallelism = 1;
    std::string timestamp;  ///< copied into report metadata; reports stay a pure function of the grid

    ConfidenceSpec conf() const { return {alpha, z_convention}; }
};

SweepGrid grid_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const SweepGrid& grid);

struct ReportRow {
    std::vector<std::optional<double>> cell;  ///< one entry per coordinate; empty for summary rows
    std::string statistic;
    double value = 0.0;
    double standard_error = 0.0;
};

/// Two-column data for one plotted line.
struct ReportSeries {
    std::string name;
    std::string x_label;
    std::string y_label;
    std::vector<std::pair<double, double>> points;
};

struct ExperimentReport {
    std::string experiment;
    std::vector<std::string> coordinates;
    std::vector<ReportRow> rows;
    std::vector<ReportSeries> series;
    std::uint64_t seed = 0;
    std::string timestamp;
    std::string version{kToolkitVersion};

    /// Value of `statistic` at `cell` (no summary wildcard); empty when absent.
    std::optional<double> value(const std::vector<std::optional<double>>& cell, std::string_view statistic) const;
    const ReportRow* find(const std::vector<std::optional<double>>& cell, std::string_view statistic) const;
    /// Throws std::logic_error if a (cell, statistic) pair repeats.
    void check_unique() const;
};

/// Mean Clopper-Pearson and normal-approximation bounds per (p_A, n) over `trials` binomial draws.
ExperimentReport run_bound_comparison(const SweepGrid& grid);

/// Empirical average certified radius per (sigma, n) with synthetic points drawn from grid.dist, its ratio to the
/// largest-n cell, and the predicted ratios.
ExperimentReport run_ratio_experiment(const SweepGrid& grid);

/// Certified accuracy per (sigma, n, R0), the drop against the largest-n curve and its bound.
ExperimentReport run_accuracy_curves(const SweepGrid& grid, const std::vector<double>& radius_grid);

/// 20 evenly spaced radii from 0 to sigma * Phi^-1(0.999).
std::vector<double> default_radius_grid(double sigma);

/// Stratified draw of `count` values of p_A: the i-th value is dist.quantile((i + u_i) / count).
std::vector<double> sample_population(const PADistribution& dist, std::size_t count, std::uint64_t seed);

void write_report_csv(std::ostream& out, const ExperimentReport& report);
void write_report_json(std::ostream& out, const ExperimentReport& report);
void to_json(nlohmann::json& j, const ExperimentReport& report);

/// Writes report.csv, report.json and one `<series>.dat` file per series into `dir`.
void write_report_files(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace smoothcert
