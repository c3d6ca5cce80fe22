#include "smoothcert/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "smoothcert/format.hpp"
#include "smoothcert/parallel.hpp"
#include "smoothcert/rng.hpp"

namespace smoothcert {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
    double mean = 0.0;
    double se = 0.0;
};

Moments moments(const std::vector<double>& xs) {
    Moments m;
    if (xs.empty()) return {kNaN, kNaN};
    double sum = 0.0;
    for (const double x : xs) sum += x;
    m.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (const double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    }
    return m;
}

// Ratio of paired means with a delta-method standard error.
Moments paired_ratio(const std::vector<double>& num, const std::vector<double>& den) {
    const auto a = moments(num);
    const auto b = moments(den);
    if (b.mean == 0.0) return {kNaN, kNaN};
    const double r = a.mean / b.mean;
    const std::size_t count = num.size();
    if (count < 2) return {r, 0.0};
    double ss = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double d = num[i] - r * den[i];
        ss += d * d;
    }
    const double var = ss / static_cast<double>(count - 1) / static_cast<double>(count);
    return {r, std::sqrt(var) / std::fabs(b.mean)};
}

std::uint64_t cell_seed(std::uint64_t global, std::string_view tag, double a, double b) {
    return derive_seed(derive_seed(derive_seed(global, stable_hash(tag)), a), b);
}

std::string point_name(std::size_t i) { return "pt-" + std::to_string(i); }

std::string label(std::string_view prefix, std::string_view key, double v) {
    return std::string(prefix) + "_" + std::string(key) + format_double(v);
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

void validate_common(const SweepGrid& grid) {
    require(!grid.n_list.empty(), "grid: n_list must be nonempty");
    require(std::all_of(grid.n_list.begin(), grid.n_list.end(), [](auto n) { return n >= 1; }),
            "grid: every n must be at least 1");
    require(grid.trials >= 1, "grid: trials must be at least 1");
    grid.conf().validate();
}

void validate_population_grid(const SweepGrid& grid) {
    validate_common(grid);
    require(grid.dist.has_value(), "grid: this experiment needs a distribution");
    require(!grid.sigma_list.empty(), "grid: sigma_list must be nonempty");
    require(std::all_of(grid.sigma_list.begin(), grid.sigma_list.end(), [](double s) { return s > 0.0; }),
            "grid: every sigma must be positive");
    require(grid.points_per_cell >= 1, "grid: points_per_cell must be at least 1");
}

std::uint64_t reference_n(const SweepGrid& grid) { return *std::max_element(grid.n_list.begin(), grid.n_list.end()); }

// Radius credited to a synthetic point whose true class is 0; -1 marks "not certified correct".
std::vector<double> certify_population(const std::vector<double>& p_values, const SmoothingConfig& cfg,
                                       BoundMethod method, std::uint64_t seed) {
    std::vector<double> radii(p_values.size());
    for (std::size_t i = 0; i < p_values.size(); ++i) {
        const SyntheticVoteSource source({p_values[i], 2, RivalPolicy::single_rival});
        const auto outcome = certify(source, point_name(i), cfg, method, {seed});
        const auto* c = std::get_if<Certified>(&outcome.decision);
        radii[i] = (c != nullptr && c->label == 0) ? c->radius : -1.0;
    }
    return radii;
}

ZConvention parse_z_convention(const std::string& text) {
    if (text == "two-sided" || text == "two_sided" || text == "two_sided_quantile") return ZConvention::two_sided_quantile;
    if (text == "one-sided" || text == "one_sided" || text == "one_sided_quantile") return ZConvention::one_sided_quantile;
    throw std::invalid_argument("unknown z convention '" + text + "'");
}

}  // namespace

SweepGrid grid_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"p_list",        "dist",        "n_list",         "sigma_list",
                                             "alpha",         "z_convention", "trials",         "points_per_cell",
                                             "global_seed",   "bound_method", "radius_grid",    "parallelism",
                                             "timestamp"};
    require(j.is_object(), "grid file must hold a JSON object");
    for (const auto& [key, value] : j.items()) require(known.contains(key), "grid: unknown field '" + key + "'");

    SweepGrid grid;
    if (j.contains("p_list")) grid.p_list = j.at("p_list").get<std::vector<double>>();
    if (j.contains("dist")) grid.dist = distribution_from_json(j.at("dist"));
    grid.n_list = j.at("n_list").get<std::vector<std::uint64_t>>();
    if (j.contains("sigma_list")) grid.sigma_list = j.at("sigma_list").get<std::vector<double>>();
    grid.alpha = j.value("alpha", grid.alpha);
    if (j.contains("z_convention")) grid.z_convention = parse_z_convention(j.at("z_convention").get<std::string>());
    grid.trials = j.value("trials", grid.trials);
    grid.points_per_cell = j.value("points_per_cell", grid.points_per_cell);
    grid.global_seed = j.value("global_seed", grid.global_seed);
    if (j.contains("bound_method")) grid.bound_method = parse_bound_method(j.at("bound_method").get<std::string>());
    if (j.contains("radius_grid")) grid.radius_grid = j.at("radius_grid").get<std::vector<double>>();
    grid.parallelism = j.value("parallelism", grid.parallelism);
    grid.timestamp = j.value("timestamp", grid.timestamp);
    return grid;
}

void to_json(nlohmann::json& j, const SweepGrid& grid) {
    j = nlohmann::json{{"n_list", grid.n_list},
                       {"sigma_list", grid.sigma_list},
                       {"alpha", grid.alpha},
                       {"z_convention", grid.z_convention == ZConvention::two_sided_quantile ? "two-sided" : "one-sided"},
                       {"trials", grid.trials},
                       {"points_per_cell", grid.points_per_cell},
                       {"global_seed", grid.global_seed},
                       {"bound_method", std::string(to_string(grid.bound_method))},
                       {"parallelism", grid.parallelism},
                       {"timestamp", grid.timestamp}};
    if (!grid.p_list.empty()) j["p_list"] = grid.p_list;
    if (grid.dist) j["dist"] = *grid.dist;
    if (!grid.radius_grid.empty()) j["radius_grid"] = grid.radius_grid;
}

const ReportRow* ExperimentReport::find(const std::vector<std::optional<double>>& cell,
                                        std::string_view statistic) const {
    for (const auto& row : rows) {
        if (row.statistic == statistic && row.cell == cell) return &row;
    }
    return nullptr;
}

std::optional<double> ExperimentReport::value(const std::vector<std::optional<double>>& cell,
                                              std::string_view statistic) const {
    const auto* row = find(cell, statistic);
    if (row == nullptr) return std::nullopt;
    return row->value;
}

void ExperimentReport::check_unique() const {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& row : rows) {
        std::string key;
        for (const auto& c : row.cell) key += (c ? format_double(*c) : std::string("*")) + ";";
        if (!seen.emplace(key, row.statistic).second) {
            throw std::logic_error("duplicate report row " + key + " " + row.statistic);
        }
    }
}

std::vector<double> default_radius_grid(double sigma) {
    constexpr int count = 20;
    const double top = sigma * normal_quantile(0.999);
    std::vector<double> radii(count);
    for (int i = 0; i < count; ++i) radii[i] = top * static_cast<double>(i) / static_cast<double>(count - 1);
    return radii;
}

std::vector<double> sample_population(const PADistribution& dist, std::size_t count, std::uint64_t seed) {
    CounterStream stream(seed);
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = (static_cast<double>(i) + stream.uniform()) / static_cast<double>(count);
        values[i] = dist.quantile(std::min(u, std::nextafter(1.0, 0.0)));
    }
    return values;
}

ExperimentReport run_bound_comparison(const SweepGrid& grid) {
    validate_common(grid);
    require(!grid.p_list.empty(), "grid: bound comparison needs p_list");
    require(std::all_of(grid.p_list.begin(), grid.p_list.end(), [](double p) { return p >= 0.0 && p <= 1.0; }),
            "grid: every p must lie in [0, 1]");
    const auto conf = grid.conf();
    const ConfidenceSpec cp_conf{grid.alpha, ZConvention::one_sided_quantile};

    struct CellResult {
        Moments cp, clt, gap, abs_gap;
    };
    const std::size_t cells = grid.p_list.size() * grid.n_list.size();
    std::vector<CellResult> results(cells);
    parallel_for(cells, grid.parallelism, [&](std::size_t idx) {
        const double p = grid.p_list[idx / grid.n_list.size()];
        const std::uint64_t n = grid.n_list[idx % grid.n_list.size()];
        CounterStream stream(cell_seed(grid.global_seed, "bounds", p, static_cast<double>(n)));
        std::vector<double> cp(grid.trials), clt(grid.trials), gap(grid.trials), abs_gap(grid.trials);
        for (std::uint64_t t = 0; t < grid.trials; ++t) {
            const ProbEstimate est(sample_binomial(stream, n, p), n);
            cp[t] = cp_lower_bound(est, cp_conf);
            clt[t] = clt_lower_bound(est, conf);
            gap[t] = cp[t] - clt[t];
            abs_gap[t] = std::fabs(gap[t]);
        }
        results[idx] = {moments(cp), moments(clt), moments(gap), moments(abs_gap)};
    });

    ExperimentReport report;
    report.experiment = "bounds";
    report.coordinates = {"p_a", "n"};
    report.seed = grid.global_seed;
    report.timestamp = grid.timestamp;
    for (std::size_t idx = 0; idx < cells; ++idx) {
        const double p = grid.p_list[idx / grid.n_list.size()];
        const double n = static_cast<double>(grid.n_list[idx % grid.n_list.size()]);
        const auto& r = results[idx];
        const std::vector<std::optional<double>> cell{p, n};
        report.rows.push_back({cell, "cp_mean", r.cp.mean, r.cp.se});
        report.rows.push_back({cell, "clt_mean", r.clt.mean, r.clt.se});
        report.rows.push_back({cell, "gap_mean", r.gap.mean, r.gap.se});
        report.rows.push_back({cell, "abs_gap_mean", r.abs_gap.mean, r.abs_gap.se});
    }
    for (std::size_t pi = 0; pi < grid.p_list.size(); ++pi) {
        ReportSeries cp{label("bounds_cp", "p", grid.p_list[pi]), "n", "mean lower bound", {}};
        ReportSeries clt{label("bounds_clt", "p", grid.p_list[pi]), "n", "mean lower bound", {}};
        for (std::size_t ni = 0; ni < grid.n_list.size(); ++ni) {
            const auto& r = results[pi * grid.n_list.size() + ni];
            const double n = static_cast<double>(grid.n_list[ni]);
            cp.points.emplace_back(n, r.cp.mean);
            clt.points.emplace_back(n, r.clt.mean);
        }
        report.series.push_back(std::move(cp));
        report.series.push_back(std::move(clt));
    }
    report.check_unique();
    return report;
}

ExperimentReport run_ratio_experiment(const SweepGrid& grid) {
    validate_population_grid(grid);
    const auto& dist = *grid.dist;
    const auto conf = grid.conf();
    const std::uint64_t n_ref = reference_n(grid);
    const std::size_t sigmas = grid.sigma_list.size();
    const std::size_t ns = grid.n_list.size();

    std::vector<std::vector<double>> populations(sigmas);
    for (std::size_t si = 0; si < sigmas; ++si) {
        populations[si] = sample_population(dist, grid.points_per_cell,
                                            cell_seed(grid.global_seed, "ratio-points", grid.sigma_list[si], 0.0));
    }
    std::vector<std::vector<double>> radii(sigmas * ns);
    parallel_for(sigmas * ns, grid.parallelism, [&](std::size_t idx) {
        const double sigma = grid.sigma_list[idx / ns];
        const std::uint64_t n = grid.n_list[idx % ns];
        const SmoothingConfig cfg{sigma, conf, n};
        auto r = certify_population(populations[idx / ns], cfg, grid.bound_method,
                                    cell_seed(grid.global_seed, "ratio", sigma, static_cast<double>(n)));
        for (auto& v : r) v = std::max(v, 0.0);
        radii[idx] = std::move(r);
    });

    const auto* piecewise = dist.as_piecewise();
    ExperimentReport report;
    report.experiment = "ratio";
    report.coordinates = {"sigma", "n"};
    report.seed = grid.global_seed;
    report.timestamp = grid.timestamp;

    ReportSeries theory{"ratio_theory", "n", "radius ratio", {}};
    for (std::size_t si = 0; si < sigmas; ++si) {
        const double sigma = grid.sigma_list[si];
        const std::size_t ref_idx =
            si * ns + static_cast<std::size_t>(std::find(grid.n_list.begin(), grid.n_list.end(), n_ref) - grid.n_list.begin());
        const double model_ref = average_radius(dist, {sigma, conf, n_ref});
        ReportSeries measured{label("ratio", "sigma", sigma), "n", "radius ratio", {}};
        ReportSeries average{label("avg_radius", "sigma", sigma), "n", "average radius", {}};
        for (std::size_t ni = 0; ni < ns; ++ni) {
            const std::uint64_t n = grid.n_list[ni];
            const auto& r = radii[si * ns + ni];
            const std::vector<std::optional<double>> cell{sigma, static_cast<double>(n)};
            const auto avg = moments(r);
            std::size_t certified = 0;
            for (const double v : r) certified += v > 0.0 ? 1 : 0;
            const double frac = static_cast<double>(certified) / static_cast<double>(r.size());
            const auto ratio = paired_ratio(r, radii[ref_idx]);
            const double model = average_radius(dist, {sigma, conf, n});

            report.rows.push_back({cell, "avg_radius", avg.mean, avg.se});
            report.rows.push_back(
                {cell, "certified_fraction", frac, std::sqrt(frac * (1.0 - frac) / static_cast<double>(r.size()))});
            report.rows.push_back({cell, "ratio_to_ref", ratio.mean, ratio.se});
            report.rows.push_back({cell, "avg_radius_model", model, 0.0});
            report.rows.push_back({cell, "ratio_model", model_ref > 0.0 ? model / model_ref : kNaN, 0.0});
            if (piecewise != nullptr) {
                const double pred = ratio_theoretical(conf, n, piecewise->beta) / ratio_theoretical(conf, n_ref, piecewise->beta);
                report.rows.push_back({cell, "ratio_theory", pred, 0.0});
                if (si == 0) theory.points.emplace_back(static_cast<double>(n), pred);
            }
            measured.points.emplace_back(static_cast<double>(n), ratio.mean);
            average.points.emplace_back(static_cast<double>(n), avg.mean);
        }
        report.series.push_back(std::move(measured));
        report.series.push_back(std::move(average));
    }
    if (!theory.points.empty()) report.series.push_back(std::move(theory));
    report.check_unique();
    return report;
}

ExperimentReport run_accuracy_curves(const SweepGrid& grid, const std::vector<double>& radius_grid) {
    validate_population_grid(grid);
    require(std::is_sorted(radius_grid.begin(), radius_grid.end()), "radius grid must be sorted ascending");
    require(std::all_of(radius_grid.begin(), radius_grid.end(), [](double r) { return r >= 0.0; }),
            "radius grid entries must be non-negative");
    const auto& dist = *grid.dist;
    const auto conf = grid.conf();
    const std::uint64_t n_ref = reference_n(grid);
    const std::size_t sigmas = grid.sigma_list.size();
    const std::size_t ns = grid.n_list.size();

    std::vector<std::vector<double>> populations(sigmas);
    for (std::size_t si = 0; si < sigmas; ++si) {
        populations[si] = sample_population(dist, grid.points_per_cell,
                                            cell_seed(grid.global_seed, "accuracy-points", grid.sigma_list[si], 0.0));
    }
    std::vector<std::vector<double>> radii(sigmas * ns);
    parallel_for(sigmas * ns, grid.parallelism, [&](std::size_t idx) {
        const double sigma = grid.sigma_list[idx / ns];
        const std::uint64_t n = grid.n_list[idx % ns];
        radii[idx] = certify_population(populations[idx / ns], {sigma, conf, n}, grid.bound_method,
                                        cell_seed(grid.global_seed, "accuracy", sigma, static_cast<double>(n)));
    });

    ExperimentReport report;
    report.experiment = "accuracy";
    report.coordinates = {"sigma", "n", "radius"};
    report.seed = grid.global_seed;
    report.timestamp = grid.timestamp;

    for (std::size_t si = 0; si < sigmas; ++si) {
        const double sigma = grid.sigma_list[si];
        const auto radii_grid = radius_grid.empty() ? default_radius_grid(sigma) : radius_grid;
        const std::size_t ref_idx =
            si * ns + static_cast<std::size_t>(std::find(grid.n_list.begin(), grid.n_list.end(), n_ref) - grid.n_list.begin());
        ReportSeries mean_drop_series{label("mean_drop", "sigma", sigma), "n", "certified accuracy drop", {}};
        ReportSeries bound_series{label("drop_bound", "sigma", sigma), "n", "certified accuracy drop", {}};

        for (std::size_t ni = 0; ni < ns; ++ni) {
            const std::uint64_t n = grid.n_list[ni];
            const SmoothingConfig cfg{sigma, conf, n};
            const auto& r = radii[si * ns + ni];
            const auto& ref = radii[ref_idx];
            const double count = static_cast<double>(r.size());
            const double bound = accuracy_drop_bound(conf, n);
            ReportSeries curve{label(label("accuracy", "sigma", sigma), "n", static_cast<double>(n)), "radius",
                               "certified accuracy", {}};
            ReportSeries drops{label(label("drop", "sigma", sigma), "n", static_cast<double>(n)), "radius",
                               "certified accuracy drop", {}};
            double drop_sum = 0.0;
            double drop_max = -std::numeric_limits<double>::infinity();
            for (const double r0 : radii_grid) {
                std::vector<double> hit(r.size()), diff(r.size());
                for (std::size_t i = 0; i < r.size(); ++i) {
                    hit[i] = r[i] >= 0.0 && r[i] >= r0 ? 1.0 : 0.0;
                    const double hit_ref = ref[i] >= 0.0 && ref[i] >= r0 ? 1.0 : 0.0;
                    diff[i] = hit_ref - hit[i];
                }
                const auto acc = moments(hit);
                const auto drop = moments(diff);
                const auto query = AccuracyQuery::at(r0, sigma);
                const std::vector<std::optional<double>> cell{sigma, static_cast<double>(n), r0};
                report.rows.push_back({cell, "accuracy", acc.mean, std::sqrt(acc.mean * (1.0 - acc.mean) / count)});
                report.rows.push_back({cell, "drop", drop.mean, drop.se});
                report.rows.push_back({cell, "drop_bound", bound, 0.0});
                report.rows.push_back({cell, "ideal_accuracy", certified_accuracy(dist, query, cfg, true), 0.0});
                report.rows.push_back({cell, "model_accuracy", certified_accuracy(dist, query, cfg, false), 0.0});
                curve.points.emplace_back(r0, acc.mean);
                drops.points.emplace_back(r0, drop.mean);
                drop_sum += drop.mean;
                drop_max = std::max(drop_max, drop.mean);
            }
            const std::vector<std::optional<double>> summary{sigma, static_cast<double>(n), std::nullopt};
            const double mean_drop = drop_sum / static_cast<double>(radii_grid.size());
            report.rows.push_back({summary, "mean_drop", mean_drop, 0.0});
            report.rows.push_back({summary, "max_drop", drop_max, 0.0});
            report.rows.push_back({summary, "drop_bound", bound, 0.0});
            mean_drop_series.points.emplace_back(static_cast<double>(n), mean_drop);
            bound_series.points.emplace_back(static_cast<double>(n), bound);
            report.series.push_back(std::move(curve));
            report.series.push_back(std::move(drops));
        }
        report.series.push_back(std::move(mean_drop_series));
        report.series.push_back(std::move(bound_series));
    }
    report.check_unique();
    return report;
}

void write_report_csv(std::ostream& out, const ExperimentReport& report) {
    out << "# experiment=" << report.experiment << " seed=" << report.seed << " timestamp=" << report.timestamp
        << " version=" << report.version << '\n';
    for (const auto& c : report.coordinates) out << c << ',';
    out << "statistic,value,standard_error\n";
    for (const auto& row : report.rows) {
        for (const auto& c : row.cell) {
            if (c) out << format_double(*c);
            out << ',';
        }
        out << row.statistic << ',' << format_double(row.value) << ',' << format_double(row.standard_error) << '\n';
    }
}

void to_json(nlohmann::json& j, const ExperimentReport& report) {
    auto rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        nlohmann::json cell = nlohmann::json::object();
        for (std::size_t i = 0; i < report.coordinates.size() && i < row.cell.size(); ++i) {
            cell[report.coordinates[i]] = row.cell[i] ? nlohmann::json(*row.cell[i]) : nlohmann::json(nullptr);
        }
        rows.push_back({{"cell", cell},
                        {"statistic", row.statistic},
                        {"value", std::isfinite(row.value) ? nlohmann::json(row.value) : nlohmann::json(nullptr)},
                        {"standard_error", std::isfinite(row.standard_error) ? nlohmann::json(row.standard_error)
                                                                              : nlohmann::json(nullptr)}});
    }
    auto series = nlohmann::json::array();
    for (const auto& s : report.series) {
        auto points = nlohmann::json::array();
        for (const auto& [x, y] : s.points) {
            points.push_back({x, std::isfinite(y) ? nlohmann::json(y) : nlohmann::json(nullptr)});
        }
        series.push_back({{"name", s.name}, {"x_label", s.x_label}, {"y_label", s.y_label}, {"points", points}});
    }
    j = nlohmann::json{{"experiment", report.experiment},
                       {"metadata", {{"seed", report.seed}, {"timestamp", report.timestamp}, {"version", report.version}}},
                       {"coordinates", report.coordinates},
                       {"rows", rows},
                       {"series", series}};
}

void write_report_json(std::ostream& out, const ExperimentReport& report) {
    out << nlohmann::json(report).dump(2) << '\n';
}

void write_report_files(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [](const std::filesystem::path& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
        return out;
    };
    {
        auto out = open(dir / "report.csv");
        write_report_csv(out, report);
    }
    {
        auto out = open(dir / "report.json");
        write_report_json(out, report);
    }
    for (const auto& s : report.series) {
        auto out = open(dir / (s.name + ".dat"));
        out << "# " << s.x_label << '\t' << s.y_label << '\n';
        for (const auto& [x, y] : s.points) out << format_double(x) << '\t' << format_double(y) << '\n';
    }
}

}  // namespace smoothcert
