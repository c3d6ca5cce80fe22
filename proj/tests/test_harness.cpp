#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "smoothcert/harness.hpp"
#include "support/oracles.hpp"

using namespace smoothcert;

namespace {

SweepGrid bounds_grid() {
    SweepGrid g;
    g.p_list = {0.6, 0.9, 1.0};
    g.n_list = {100, 10000};
    g.trials = 20;
    g.global_seed = 5;
    return g;
}

SweepGrid population_grid(PADistribution dist) {
    SweepGrid g;
    g.dist = std::move(dist);
    g.n_list = {100, 1000, 10000};
    g.sigma_list = {0.25, 0.5};
    g.points_per_cell = 200;
    g.global_seed = 17;
    g.timestamp = "2026-01-01T00:00:00Z";
    return g;
}

std::string csv(const ExperimentReport& r) {
    std::ostringstream out;
    write_report_csv(out, r);
    return out.str();
}

std::string json_text(const ExperimentReport& r) {
    std::ostringstream out;
    write_report_json(out, r);
    return out.str();
}

}  // namespace

TEST(BoundComparison, CertainPointHasClosedForm) {
    const auto report = run_bound_comparison(bounds_grid());
    for (const double n : {100.0, 10000.0}) {
        EXPECT_NEAR(*report.value({1.0, n}, "cp_mean"), std::pow(0.001, 1.0 / n), 1e-12);
        EXPECT_EQ(*report.value({1.0, n}, "clt_mean"), 1.0);
        EXPECT_NEAR(report.find({1.0, n}, "cp_mean")->standard_error, 0.0, 1e-15);
    }
}

TEST(BoundComparison, GapShrinksWithN) {
    const auto report = run_bound_comparison(bounds_grid());
    EXPECT_LT(*report.value({0.9, 10000.0}, "abs_gap_mean"), 0.005);
    EXPECT_LT(*report.value({0.9, 10000.0}, "abs_gap_mean"), *report.value({0.9, 100.0}, "abs_gap_mean"));
    for (const double p : {0.6, 0.9}) {
        const double mean = *report.value({p, 10000.0}, "cp_mean");
        EXPECT_LT(mean, p);
        EXPECT_GT(mean, p - 0.02);
    }
    EXPECT_EQ(report.coordinates, (std::vector<std::string>{"p_a", "n"}));
    EXPECT_EQ(report.rows.size(), 3u * 2u * 4u);
    EXPECT_NO_THROW(report.check_unique());
}

TEST(BoundComparison, SingleTrialHasZeroStandardError) {
    auto g = bounds_grid();
    g.trials = 1;
    const auto report = run_bound_comparison(g);
    for (const auto& row : report.rows) {
        EXPECT_TRUE(std::isfinite(row.value));
        EXPECT_EQ(row.standard_error, 0.0);
    }
}

TEST(BoundComparison, Validation) {
    auto g = bounds_grid();
    g.p_list.clear();
    EXPECT_THROW(run_bound_comparison(g), std::invalid_argument);
    g = bounds_grid();
    g.p_list = {1.2};
    EXPECT_THROW(run_bound_comparison(g), std::invalid_argument);
    g = bounds_grid();
    g.n_list = {};
    EXPECT_THROW(run_bound_comparison(g), std::invalid_argument);
    g = bounds_grid();
    g.trials = 0;
    EXPECT_THROW(run_bound_comparison(g), std::invalid_argument);
}

TEST(RatioExperiment, ReferenceCellIsOneAndRatiosTrackModel) {
    const auto report = run_ratio_experiment(population_grid(PADistribution::uniform_from(0.8)));
    for (const double sigma : {0.25, 0.5}) {
        EXPECT_EQ(*report.value({sigma, 10000.0}, "ratio_to_ref"), 1.0);
        const double measured = *report.value({sigma, 1000.0}, "ratio_to_ref");
        const double model = *report.value({sigma, 1000.0}, "ratio_model");
        EXPECT_NEAR(measured, model, 4.0 * report.find({sigma, 1000.0}, "ratio_to_ref")->standard_error + 0.01);
        EXPECT_LT(*report.value({sigma, 100.0}, "ratio_to_ref"), measured);
        const double z = oracle::z_two_sided(0.001);
        EXPECT_NEAR(*report.value({sigma, 1000.0}, "ratio_theory"),
                    (1.0 - 1.64 * z / std::sqrt(1000.0)) / (1.0 - 1.64 * z / 100.0), 1e-12);
        EXPECT_EQ(*report.value({sigma, 1000.0}, "certified_fraction"), 1.0);
    }
    // Population radii scale with sigma; each sigma draws its own population, so compare the model rows.
    EXPECT_NEAR(*report.value({0.5, 1000.0}, "avg_radius_model"), 2.0 * *report.value({0.25, 1000.0}, "avg_radius_model"),
                1e-7);
}

TEST(RatioExperiment, PointMassAtOneHalfGivesZeroRadius) {
    auto g = population_grid(PADistribution::empirical({0.5, 0.5}, {1.0}));
    g.sigma_list = {0.5};
    const auto report = run_ratio_experiment(g);
    for (const double n : {100.0, 1000.0, 10000.0}) {
        EXPECT_LT(*report.value({0.5, n}, "avg_radius"), 0.01) << n;
        EXPECT_EQ(*report.value({0.5, n}, "avg_radius_model"), 0.0);
    }
    const auto j = nlohmann::json::parse(json_text(report));
    bool saw_null = false;
    for (const auto& row : j.at("rows")) saw_null = saw_null || (row.at("statistic") == "ratio_model" && row.at("value").is_null());
    EXPECT_TRUE(saw_null);
}

TEST(RatioExperiment, EmpiricalHasNoTheoryRows) {
    auto g = population_grid(PADistribution::empirical({0.7, 0.9, 1.0}, {0.5, 0.5}));
    g.n_list = {100, 1000};
    const auto report = run_ratio_experiment(g);
    EXPECT_FALSE(report.value({0.5, 100.0}, "ratio_theory").has_value());
    for (const auto& s : report.series) EXPECT_NE(s.name, "ratio_theory");
}

TEST(RatioExperiment, NeedsDistribution) {
    auto g = population_grid(PADistribution::uniform_from(0.8));
    g.dist.reset();
    EXPECT_THROW(run_ratio_experiment(g), std::invalid_argument);
    g = population_grid(PADistribution::uniform_from(0.8));
    g.sigma_list = {0.0};
    EXPECT_THROW(run_ratio_experiment(g), std::invalid_argument);
}

TEST(AccuracyCurves, ZeroRadiusAndBeyondCap) {
    auto g = population_grid(PADistribution::uniform_from(0.9));
    g.sigma_list = {0.5};
    const double beyond = 0.5 * oracle::normal_quantile(1 - 1e-9) + 1e-6;
    const auto report = run_accuracy_curves(g, {0.0, 0.5, beyond});
    for (const double n : {100.0, 1000.0, 10000.0}) {
        EXPECT_EQ(*report.value({0.5, n, beyond}, "accuracy"), 0.0);
        EXPECT_EQ(*report.value({0.5, n, 0.0}, "ideal_accuracy"), 1.0);
    }
    EXPECT_EQ(*report.value({0.5, 10000.0, 0.0}, "accuracy"), 1.0);
    EXPECT_EQ(*report.value({0.5, 10000.0, 0.5}, "drop"), 0.0);
}

TEST(AccuracyCurves, DropStaysUnderBound) {
    auto g = population_grid(PADistribution::uniform_from(0.5));
    g.sigma_list = {0.5};
    g.n_list = {1000, 10000};
    g.points_per_cell = 400;
    const auto report = run_accuracy_curves(g, {});
    const auto grid = default_radius_grid(0.5);
    ASSERT_EQ(grid.size(), 20u);
    EXPECT_NEAR(grid.back(), 0.5 * oracle::normal_quantile(0.999), 1e-12);
    for (const double r0 : grid) {
        const auto* drop = report.find({0.5, 1000.0, r0}, "drop");
        ASSERT_NE(drop, nullptr);
        EXPECT_LE(drop->value, *report.value({0.5, 1000.0, r0}, "drop_bound") + 3.0 * drop->standard_error);
    }
    EXPECT_TRUE(report.value({0.5, 1000.0, std::nullopt}, "mean_drop").has_value());
    EXPECT_NEAR(*report.value({0.5, 1000.0, std::nullopt}, "drop_bound"), 0.10406, 1e-5);
    EXPECT_EQ(*report.value({0.5, 10000.0, std::nullopt}, "max_drop"), 0.0);
}

TEST(AccuracyCurves, RejectsBadRadiusGrid) {
    const auto g = population_grid(PADistribution::uniform_from(0.8));
    EXPECT_THROW(run_accuracy_curves(g, {0.5, 0.1}), std::invalid_argument);
    EXPECT_THROW(run_accuracy_curves(g, {-0.1, 0.1}), std::invalid_argument);
}

TEST(Determinism, ReportsAreIndependentOfParallelism) {
    auto g = population_grid(PADistribution::piecewise(0.2, 0.6, 0.8));
    g.parallelism = 1;
    const auto a = run_ratio_experiment(g);
    const auto c = run_accuracy_curves(g, {0.0, 0.3});
    auto b_grid = bounds_grid();
    const auto e = run_bound_comparison(b_grid);
    g.parallelism = 8;
    b_grid.parallelism = 8;
    EXPECT_EQ(csv(a), csv(run_ratio_experiment(g)));
    EXPECT_EQ(json_text(a), json_text(run_ratio_experiment(g)));
    EXPECT_EQ(csv(c), csv(run_accuracy_curves(g, {0.0, 0.3})));
    EXPECT_EQ(json_text(e), json_text(run_bound_comparison(b_grid)));
}

TEST(Determinism, SeedChangesResults) {
    auto g = bounds_grid();
    const auto a = csv(run_bound_comparison(g));
    g.global_seed = 6;
    EXPECT_NE(a, csv(run_bound_comparison(g)));
}

TEST(SamplePopulation, Stratified) {
    const auto values = sample_population(PADistribution::uniform_from(0.5), 100, 3);
    ASSERT_EQ(values.size(), 100u);
    for (std::size_t i = 0; i < values.size(); ++i) {
        EXPECT_GE(values[i], 0.5 + 0.005 * static_cast<double>(i) - 1e-12);
        EXPECT_LT(values[i], 0.5 + 0.005 * static_cast<double>(i + 1) + 1e-12);
    }
    EXPECT_EQ(values, sample_population(PADistribution::uniform_from(0.5), 100, 3));
}

TEST(ReportOutput, CsvLayout) {
    auto g = bounds_grid();
    g.timestamp = "T0";
    const auto text = csv(run_bound_comparison(g));
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "# experiment=bounds seed=5 timestamp=T0 version=1.0.0");
    std::getline(in, line);
    EXPECT_EQ(line, "p_a,n,statistic,value,standard_error");
    std::getline(in, line);
    EXPECT_EQ(line.rfind("0.6,100,cp_mean,", 0), 0u) << line;
}

TEST(ReportOutput, JsonLayout) {
    const auto report = run_bound_comparison(bounds_grid());
    const auto j = nlohmann::json::parse(json_text(report));
    EXPECT_EQ(j.at("experiment"), "bounds");
    EXPECT_EQ(j.at("metadata").at("seed"), 5);
    EXPECT_EQ(j.at("metadata").at("version"), "1.0.0");
    EXPECT_EQ(j.at("rows").size(), report.rows.size());
    EXPECT_EQ(j.at("series").size(), report.series.size());
    const auto& row = j.at("rows").at(0);
    EXPECT_EQ(row.at("cell").at("p_a"), 0.6);
    EXPECT_EQ(row.at("cell").at("n"), 100);
}

TEST(ReportOutput, FilesOnDisk) {
    const auto dir = std::filesystem::temp_directory_path() / ("harness_out_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    const auto report = run_bound_comparison(bounds_grid());
    write_report_files(report, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "report.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
    for (const auto& s : report.series) {
        std::ifstream in(dir / (s.name + ".dat"));
        ASSERT_TRUE(in) << s.name;
        std::string header;
        std::getline(in, header);
        EXPECT_EQ(header.rfind("# ", 0), 0u);
        std::size_t lines = 0;
        for (std::string l; std::getline(in, l);) ++lines;
        EXPECT_EQ(lines, s.points.size());
    }
    std::filesystem::remove_all(dir);
}

TEST(ReportRows, DuplicateDetection) {
    ExperimentReport r;
    r.rows = {{{1.0}, "x", 0.0, 0.0}, {{1.0}, "y", 0.0, 0.0}};
    EXPECT_NO_THROW(r.check_unique());
    r.rows.push_back({{1.0}, "x", 2.0, 0.0});
    EXPECT_THROW(r.check_unique(), std::logic_error);
}

TEST(GridJson, RoundTripAndStrictKeys) {
    const auto text = R"({"p_list":[0.6],"dist":{"kind":"uniform","lower":0.8},"n_list":[100,1000],
        "sigma_list":[0.5],"alpha":0.01,"z_convention":"one-sided","trials":3,"points_per_cell":10,
        "global_seed":9,"bound_method":"clt","radius_grid":[0,0.1],"parallelism":2,"timestamp":"t"})";
    const auto g = grid_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(g.alpha, 0.01);
    EXPECT_EQ(g.z_convention, ZConvention::one_sided_quantile);
    EXPECT_EQ(g.bound_method, BoundMethod::clt);
    EXPECT_EQ(g.dist->as_piecewise()->beta, 0.8);
    const nlohmann::json back = g;
    EXPECT_EQ(nlohmann::json(grid_from_json(back)), back);

    EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"n_list":[10],"trails":3})")), std::invalid_argument);
    EXPECT_ANY_THROW(grid_from_json(nlohmann::json::parse(R"({"p_list":[0.5]})")));
    EXPECT_THROW(grid_from_json(nlohmann::json::parse(R"({"n_list":[10],"z_convention":"both"})")),
                 std::invalid_argument);
}
