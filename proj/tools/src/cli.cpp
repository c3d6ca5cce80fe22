#include "smoothcert/cli.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "smoothcert/certify.hpp"
#include "smoothcert/errors.hpp"
#include "smoothcert/external_oracle.hpp"
#include "smoothcert/format.hpp"
#include "smoothcert/harness.hpp"
#include "smoothcert/population.hpp"
#include "smoothcert/radius_model.hpp"
#include "smoothcert/stat_bounds.hpp"
#include "smoothcert/votes.hpp"

namespace smoothcert::cli {

namespace {

using Record = nlohmann::ordered_json;

enum class Format { plain, json, csv };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const std::map<std::string, ZConvention> kZConventions{{"two-sided", ZConvention::two_sided_quantile},
                                                       {"one-sided", ZConvention::one_sided_quantile}};
const std::map<std::string, Format> kFormats{{"plain", Format::plain}, {"json", Format::json}, {"csv", Format::csv}};

std::string scalar_text(const Record& v) {
    if (v.is_null()) return "";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_float()) return format_double(v.get<double>());
    return v.dump();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (const char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + '"';
}

void emit(std::ostream& out, Format format, const std::vector<Record>& records) {
    switch (format) {
        case Format::json:
            for (const auto& r : records) out << r.dump() << '\n';
            break;
        case Format::csv: {
            if (records.empty()) return;
            bool first = true;
            for (const auto& item : records.front().items()) {
                out << (first ? "" : ",") << csv_field(item.key());
                first = false;
            }
            out << '\n';
            for (const auto& r : records) {
                first = true;
                for (const auto& item : r.items()) {
                    out << (first ? "" : ",") << csv_field(scalar_text(item.value()));
                    first = false;
                }
                out << '\n';
            }
            break;
        }
        case Format::plain:
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (i > 0) out << '\n';
                for (const auto& item : records[i].items()) out << item.key() << ": " << scalar_text(item.value()) << '\n';
            }
            break;
    }
}

void warn_clt(std::ostream& err, std::uint64_t n) {
    if (!clt_assumption_holds(n)) {
        err << "warning: n=" << n << " is below " << kCltMinSamples << "; the normal-approximation bound is unreliable\n";
    }
}

std::vector<std::string> read_point_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read points file '" + path + "'");
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto start = line.find_first_not_of(" \t");
        if (start == std::string::npos || line[start] == '#') continue;
        const auto end = line.find_last_not_of(" \t");
        ids.push_back(line.substr(start, end - start + 1));
    }
    return ids;
}

Record flatten(const CertificationOutcome& o) {
    Record r;
    r["point_id"] = o.point_id;
    if (const auto* c = std::get_if<Certified>(&o.decision)) {
        r["decision"] = "certified";
        r["class"] = c->label;
    } else {
        r["decision"] = "abstain";
        r["class"] = nullptr;
    }
    r["radius"] = o.radius();
    r["majority_class"] = o.majority_class;
    r["p_hat"] = o.p_hat;
    r["p_lower"] = o.p_lower;
    r["n"] = o.n;
    r["alpha"] = o.alpha;
    r["sigma"] = o.sigma;
    r["bound"] = std::string(to_string(o.bound_method));
    r["tie"] = o.tie;
    r["saturated"] = o.saturated;
    return r;
}

struct Options {
    std::string format = "plain";
    std::uint64_t seed = 0;

    std::uint64_t successes = 0;
    std::uint64_t n = 1000;
    double alpha = 0.001;
    double sigma = 0.5;
    std::string method;
    std::string z_convention = "two-sided";

    std::string oracle;
    std::string bound = "cp";
    bool two_phase = false;
    std::uint64_t n0 = 100;
    std::string points_file;
    std::vector<std::string> points;
    std::size_t jobs = 1;

    double pa = 0.0;
    double target_radius = 0.0;
    std::uint64_t current_n = 0;
    bool strict = false;

    std::string dist;
    double beta = 0.8;
    bool numeric_theta = false;

    std::string experiment;
    std::string grid;
    std::string out_dir;
};

ConfidenceSpec confidence(const Options& o) {
    ConfidenceSpec conf{o.alpha, kZConventions.at(o.z_convention)};
    conf.validate();
    return conf;
}

int run_bound(const Options& o, Format format, std::ostream& out, std::ostream& err) {
    const auto conf = confidence(o);
    const ProbEstimate est(o.successes, o.n);
    const bool cp = o.method.empty() || o.method == "cp";
    if (!cp) warn_clt(err, o.n);
    Record r;
    r["method"] = cp ? "cp" : "clt";
    r["successes"] = o.successes;
    r["n"] = o.n;
    r["alpha"] = o.alpha;
    r["p_hat"] = est.p_hat();
    r["lower_bound"] = cp ? cp_lower_bound(est, conf) : clt_lower_bound(est, conf);
    emit(out, format, {r});
    return kOk;
}

int run_certify(const Options& o, Format format, std::ostream& out, std::ostream& err) {
    const auto spec = parse_oracle_spec(o.oracle);
    const auto method = parse_bound_method(o.bound);
    SmoothingConfig cfg{o.sigma, confidence(o), o.n};
    cfg.validate();
    if (o.two_phase && o.n0 < 1) throw UsageError("--n0 must be at least 1");

    OracleSpec effective = spec;
    if (auto* ext = std::get_if<ExternalOracle>(&effective)) ext->pool_size = std::max<std::size_t>(1, o.jobs);
    auto source = make_vote_source(effective);

    std::vector<std::string> ids = o.points;
    if (!o.points_file.empty()) {
        const auto more = read_point_file(o.points_file);
        ids.insert(ids.end(), more.begin(), more.end());
    }
    if (ids.empty()) {
        if (const auto* recorded = dynamic_cast<const RecordedVotes*>(source.get())) {
            ids = recorded->point_ids();
        } else {
            ids.push_back("pt-0");
        }
    }
    if (method == BoundMethod::clt) {
        if (const auto* recorded = dynamic_cast<const RecordedVotes*>(source.get())) {
            for (const auto& id : ids) {
                const auto& tally = recorded->lookup(id);
                if (!clt_assumption_holds(tally.n)) {
                    warn_clt(err, tally.n);
                    break;
                }
            }
        } else {
            warn_clt(err, o.n);
        }
    }

    const CertifyOptions options{o.seed, o.two_phase, o.n0};
    const auto outcomes = certify_batch(*source, ids, cfg, method, options, o.jobs);
    if (auto* pool = dynamic_cast<ExternalOraclePool*>(source.get())) pool->shutdown();

    if (format == Format::json) {
        write_outcomes_jsonl(out, outcomes);
    } else {
        std::vector<Record> records;
        records.reserve(outcomes.size());
        for (const auto& outcome : outcomes) records.push_back(flatten(outcome));
        emit(out, format, records);
    }
    return kOk;
}

int run_predict(const Options& o, Format format, std::ostream& out) {
    const auto method = o.method.empty() || o.method == "exact" ? RadiusMethod::exact_quantile : RadiusMethod::shore_expansion;
    SmoothingConfig cfg{o.sigma, confidence(o), o.n};
    cfg.validate();
    const auto now = expected_radius(o.pa, cfg, method);
    SmoothingConfig later = cfg;
    later.n = cfg.n * 100;
    const auto at_100n = expected_radius(o.pa, later, method);
    Record r;
    r["p_a"] = o.pa;
    r["n"] = o.n;
    r["sigma"] = o.sigma;
    r["alpha"] = o.alpha;
    r["method"] = method == RadiusMethod::exact_quantile ? "exact" : "shore";
    r["t_term"] = now.t_term;
    r["expected_radius"] = now.expected_radius;
    r["expected_radius_100n"] = at_100n.expected_radius;
    r["limit_radius"] = now.limit_radius;
    r["below_threshold"] = now.below_threshold;
    emit(out, format, {r});
    return kOk;
}

int run_plan(const Options& o, Format format, std::ostream& out, std::ostream& err) {
    const auto plan = plan_samples(o.pa, o.sigma, confidence(o), o.target_radius, o.current_n);
    Record r;
    r["p_a"] = plan.p_a_estimate;
    r["sigma"] = o.sigma;
    r["alpha"] = o.alpha;
    r["target_radius"] = plan.target_radius;
    r["achievable"] = plan.achievable_in_limit;
    r["required_n"] = plan.required_n ? Record(*plan.required_n) : Record(nullptr);
    r["current_n"] = plan.current_n;
    r["additional_samples"] = plan.additional_samples();
    r["limit_radius"] = plan.limit_radius;
    r["limit_radius_shore"] = plan.limit_radius_shore;
    r["radius_at_current_n"] = plan.radius_at_current_n;
    emit(out, format, {r});
    if (!plan.required_n && o.strict) {
        err << "infeasible: target radius " << format_double(o.target_radius) << " exceeds the limit radius "
            << format_double(plan.limit_radius) << '\n';
        return kInfeasible;
    }
    return kOk;
}

int run_average(const Options& o, Format format, std::ostream& out) {
    const auto dist = parse_distribution_spec(o.dist);
    SmoothingConfig cfg{o.sigma, confidence(o), o.n};
    cfg.validate();
    Record r;
    r["dist"] = o.dist;
    r["n"] = o.n;
    r["sigma"] = o.sigma;
    r["alpha"] = o.alpha;
    r["average_radius"] = average_radius(dist, cfg);
    emit(out, format, {r});
    return kOk;
}

int run_ratio(const Options& o, Format format, std::ostream& out) {
    const auto conf = confidence(o);
    const auto tabulated = theta_tabulated(o.beta);
    const bool numeric = o.numeric_theta || !tabulated;
    const double theta = numeric ? theta_numeric(o.beta) : *tabulated;
    Record r;
    r["beta"] = o.beta;
    r["n"] = o.n;
    r["alpha"] = o.alpha;
    r["theta"] = theta;
    r["theta_source"] = numeric ? "numeric" : "tabulated";
    r["ratio"] = ratio_theoretical(conf, o.n, o.beta, numeric);
    emit(out, format, {r});
    return kOk;
}

int run_acc_bound(const Options& o, Format format, std::ostream& out) {
    Record r;
    r["n"] = o.n;
    r["alpha"] = o.alpha;
    r["drop_bound"] = accuracy_drop_bound(confidence(o), o.n);
    emit(out, format, {r});
    return kOk;
}

int run_simulate(const Options& o, const CLI::App& sub, Format format, std::ostream& out) {
    std::ifstream in(o.grid);
    if (!in) throw UsageError("cannot read grid file '" + o.grid + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("grid file '" + o.grid + "' is not valid JSON: " + e.what());
    }
    auto grid = grid_from_json(j);
    if (sub.count("--seed") > 0) grid.global_seed = o.seed;
    if (sub.count("--jobs") > 0) grid.parallelism = o.jobs;

    ExperimentReport report;
    if (o.experiment == "bounds") {
        report = run_bound_comparison(grid);
    } else if (o.experiment == "ratio") {
        report = run_ratio_experiment(grid);
    } else {
        report = run_accuracy_curves(grid, grid.radius_grid);
    }
    write_report_files(report, o.out_dir);
    Record r;
    r["experiment"] = report.experiment;
    r["rows"] = report.rows.size();
    r["series"] = report.series.size();
    r["seed"] = report.seed;
    r["out"] = o.out_dir;
    emit(out, format, {r});
    return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Certified radius toolkit for randomized smoothing", "smoothcert"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.add_option("--format", o.format, "Output format")->check(CLI::IsMember({"plain", "json", "csv"}));
    app.add_option("--seed", o.seed, "Global seed");
    app.set_version_flag("--version", std::string(kToolkitVersion));

    const auto add_alpha = [&o](CLI::App* sub) {
        sub->add_option("--alpha", o.alpha, "Error rate")->capture_default_str();
    };
    const auto add_z = [&o](CLI::App* sub) {
        sub->add_option("--z-convention", o.z_convention, "Normal quantile convention")
            ->check(CLI::IsMember({"two-sided", "one-sided"}))
            ->capture_default_str();
    };

    auto* bound = app.add_subcommand("bound", "Lower confidence bound on a binomial proportion");
    bound->add_option("--successes", o.successes)->required();
    bound->add_option("--n", o.n)->required()->check(CLI::PositiveNumber);
    add_alpha(bound);
    bound->add_option("--method", o.method)->check(CLI::IsMember({"cp", "clt"}));
    add_z(bound);

    auto* certify_cmd = app.add_subcommand("certify", "Certify points against an oracle");
    certify_cmd->add_option("--oracle", o.oracle, "synthetic:pA=..,k=.. | recorded:PATH | external:CMD")->required();
    certify_cmd->add_option("--n", o.n)->capture_default_str();
    add_alpha(certify_cmd);
    certify_cmd->add_option("--sigma", o.sigma)->capture_default_str();
    certify_cmd->add_option("--bound", o.bound)->check(CLI::IsMember({"cp", "clt"}))->capture_default_str();
    add_z(certify_cmd);
    certify_cmd->add_flag("--two-phase", o.two_phase);
    certify_cmd->add_option("--n0", o.n0)->capture_default_str();
    certify_cmd->add_option("--points", o.points_file, "File with one point id per line");
    certify_cmd->add_option("--point", o.points, "Point id (repeatable)");
    certify_cmd->add_option("--jobs", o.jobs)->check(CLI::PositiveNumber)->capture_default_str();

    auto* predict = app.add_subcommand("predict", "Expected radius at n, at 100n and in the limit");
    predict->add_option("--pa", o.pa)->required();
    predict->add_option("--n", o.n)->required()->check(CLI::PositiveNumber);
    add_alpha(predict);
    predict->add_option("--sigma", o.sigma)->capture_default_str();
    predict->add_option("--method", o.method)->check(CLI::IsMember({"exact", "shore"}));
    add_z(predict);

    auto* plan = app.add_subcommand("plan", "Samples needed to reach a target radius");
    plan->add_option("--pa", o.pa)->required();
    plan->add_option("--sigma", o.sigma)->capture_default_str();
    add_alpha(plan);
    plan->add_option("--target-radius", o.target_radius)->required();
    plan->add_option("--current-n", o.current_n)->capture_default_str();
    plan->add_flag("--strict", o.strict, "Exit with status 4 when the target is unreachable");
    add_z(plan);

    auto* average = app.add_subcommand("average", "Population average of the expected radius");
    average->add_option("--dist", o.dist, "piecewise:k1=..,k2=..,beta=.. | uniform:LOWER | empirical:PATH")->required();
    average->add_option("--n", o.n)->required()->check(CLI::PositiveNumber);
    add_alpha(average);
    average->add_option("--sigma", o.sigma)->capture_default_str();
    add_z(average);

    auto* ratio = app.add_subcommand("ratio", "Predicted average-radius ratio 1 - Theta z / sqrt(n)");
    ratio->add_option("--beta", o.beta)->required();
    ratio->add_option("--n", o.n)->required()->check(CLI::PositiveNumber);
    add_alpha(ratio);
    ratio->add_flag("--numeric-theta", o.numeric_theta);
    add_z(ratio);

    auto* acc_bound = app.add_subcommand("acc-bound", "Upper bound on the certified accuracy drop");
    acc_bound->add_option("--n", o.n)->required()->check(CLI::PositiveNumber);
    add_alpha(acc_bound);
    add_z(acc_bound);

    auto* simulate = app.add_subcommand("simulate", "Run a simulated sweep and write its report");
    simulate->add_option("experiment", o.experiment)->required()->check(CLI::IsMember({"bounds", "ratio", "accuracy"}));
    simulate->add_option("--grid", o.grid, "JSON grid file")->required();
    simulate->add_option("--out", o.out_dir, "Output directory")->required();
    simulate->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", o.seed, "Overrides the grid seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolkitVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    const Format format = kFormats.at(o.format);
    try {
        if (*bound) return run_bound(o, format, out, err);
        if (*certify_cmd) return run_certify(o, format, out, err);
        if (*predict) return run_predict(o, format, out);
        if (*plan) return run_plan(o, format, out, err);
        if (*average) return run_average(o, format, out);
        if (*ratio) return run_ratio(o, format, out);
        if (*acc_bound) return run_acc_bound(o, format, out);
        return run_simulate(o, *simulate, format, out);
    } catch (const BatchError& e) {
        err << "error: " << e.what() << '\n';
        return e.oracle_failure() ? kOracleFailure : kUsage;
    } catch (const OracleError& e) {
        err << "oracle error: " << e.what() << '\n';
        return kOracleFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
}

}  // namespace smoothcert::cli
