#include "smoothcert/population.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "smoothcert/format.hpp"
#include "smoothcert/quadrature.hpp"

namespace smoothcert {

namespace {

constexpr double kIntegrationTolerance = 1e-8;
constexpr double kMassTolerance = 1e-9;
constexpr double kThresholdTolerance = 1e-10;
constexpr double kShoreExponent = 0.135;
constexpr double kHSubstitutionPower = 0.635;  // u = (1 - p)^0.635 flattens the (1 - p)^-0.365 singularity

struct Segment {
    double lo, hi, density;
};

std::vector<Segment> segments_of(const PiecewiseUniform& d) {
    return {{0.0, 0.5, d.kappa1}, {0.5, d.beta, d.kappa2}, {d.beta, 1.0, d.kappa3()}};
}

// Radius of the exact finite-n predictor with z precomputed; 0 outside the certifiable region.
struct RadiusKernel {
    double sigma;
    double z;
    double n;

    double usable(double p) const { return p - z * std::sqrt(p * (1.0 - p) / n); }

    double operator()(double p) const {
        if (p < 0.5 || p >= 1.0) return 0.0;
        const double q = usable(p);
        if (q < 0.5) return 0.0;
        return sigma * normal_quantile(std::min(q, kMaxCertifiableProbability));
    }

    // Smallest p in [from, 1] with usable(p) >= target; usable is increasing on [0.5, 1].
    double threshold(double target, double from) const {
        double lo = from;
        double hi = 1.0;
        if (usable(lo) >= target) return lo;
        while (hi - lo > kThresholdTolerance) {
            const double mid = 0.5 * (lo + hi);
            if (usable(mid) < target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return hi;
    }
};

double integrate_radius(const RadiusKernel& radius, double lo, double hi) {
    if (hi <= lo) return 0.0;
    if (hi < 1.0) return integrate_adaptive_simpson(radius, lo, hi, kIntegrationTolerance);
    // p = 1 - u^2 removes the logarithmic growth of the quantile at the right end.
    auto transformed = [&](double u) { return radius(1.0 - u * u) * 2.0 * u; };
    return integrate_adaptive_simpson(transformed, 0.0, std::sqrt(1.0 - lo), kIntegrationTolerance);
}

void check_mass(double total) {
    if (std::fabs(total - 1.0) > kMassTolerance) {
        throw std::invalid_argument("distribution masses sum to " + format_double(total) + ", expected 1");
    }
}

template <typename T>
T parse_number(std::string_view text, const std::string& what) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw std::invalid_argument("malformed " + what + ": '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

PADistribution::PADistribution(std::variant<PiecewiseUniform, EmpiricalHistogram> model) : model_(std::move(model)) {}

PADistribution PADistribution::piecewise(double kappa1, double kappa2, double beta) {
    if (!(kappa1 >= 0.0 && kappa2 >= 0.0)) throw std::invalid_argument("piecewise densities must be non-negative");
    if (!(beta >= 0.5 && beta < 1.0)) throw std::invalid_argument("beta must lie in [0.5, 1)");
    PiecewiseUniform d{kappa1, kappa2, beta};
    if (d.kappa3() < -kMassTolerance) {
        throw std::invalid_argument("kappa1 and kappa2 leave negative mass for [beta, 1)");
    }
    return PADistribution(d);
}

PADistribution PADistribution::uniform_from(double lower) { return piecewise(0.0, 0.0, lower); }

PADistribution PADistribution::empirical(std::vector<double> bin_edges, std::vector<double> masses) {
    if (masses.empty() || bin_edges.size() != masses.size() + 1) {
        throw std::invalid_argument("empirical distribution needs one more edge than masses");
    }
    if (!std::is_sorted(bin_edges.begin(), bin_edges.end())) throw std::invalid_argument("bin edges must be sorted");
    if (bin_edges.front() < 0.0 || bin_edges.back() > 1.0) throw std::invalid_argument("bin edges must lie in [0, 1]");
    if (std::any_of(masses.begin(), masses.end(), [](double m) { return !(m >= 0.0); })) {
        throw std::invalid_argument("bin masses must be non-negative");
    }
    check_mass(std::accumulate(masses.begin(), masses.end(), 0.0));
    return PADistribution(EmpiricalHistogram{std::move(bin_edges), std::move(masses)});
}

double PADistribution::mass_at_or_above(double p) const {
    if (const auto* d = as_piecewise()) {
        double mass = 0.0;
        for (const auto& s : segments_of(*d)) mass += s.density * std::max(0.0, s.hi - std::max(s.lo, p));
        return std::clamp(mass, 0.0, 1.0);
    }
    const auto& h = *as_empirical();
    double mass = 0.0;
    for (std::size_t i = 0; i < h.masses.size(); ++i) {
        const double lo = h.bin_edges[i];
        const double hi = h.bin_edges[i + 1];
        if (hi == lo) {
            if (lo >= p) mass += h.masses[i];
        } else {
            mass += h.masses[i] * std::clamp((hi - std::max(lo, p)) / (hi - lo), 0.0, 1.0);
        }
    }
    return std::clamp(mass, 0.0, 1.0);
}

double PADistribution::quantile(double u) const {
    if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1)");
    const double below_one = std::nextafter(1.0, 0.0);
    double cumulative = 0.0;
    if (const auto* d = as_piecewise()) {
        const auto segs = segments_of(*d);
        for (const auto& s : segs) {
            const double m = s.density * (s.hi - s.lo);
            if (m <= 0.0) continue;
            if (u < cumulative + m) return std::min(s.lo + (u - cumulative) / s.density, below_one);
            cumulative += m;
        }
        for (auto it = segs.rbegin(); it != segs.rend(); ++it) {
            if (it->density > 0.0 && it->hi > it->lo) return std::min(it->hi, below_one);
        }
        return below_one;
    }
    const auto& h = *as_empirical();
    std::size_t last = 0;
    for (std::size_t i = 0; i < h.masses.size(); ++i) {
        const double m = h.masses[i];
        if (m <= 0.0) continue;
        last = i;
        if (u < cumulative + m) {
            const double lo = h.bin_edges[i];
            const double hi = h.bin_edges[i + 1];
            return std::min(lo + (hi - lo) * (u - cumulative) / m, hi == 1.0 ? below_one : hi);
        }
        cumulative += m;
    }
    return std::min(h.bin_edges[last + 1], below_one);
}

AccuracyQuery AccuracyQuery::at(double radius_threshold, double sigma) {
    if (!(radius_threshold >= 0.0) || !std::isfinite(radius_threshold)) {
        throw std::invalid_argument("radius threshold must be a finite non-negative length");
    }
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    return {radius_threshold, normal_cdf(radius_threshold / sigma)};
}

double average_radius(const PADistribution& dist, const SmoothingConfig& cfg) {
    cfg.validate();
    const RadiusKernel radius{cfg.sigma, cfg.conf.z(), static_cast<double>(cfg.n)};

    if (const auto* h = dist.as_empirical()) {
        double total = 0.0;
        for (std::size_t i = 0; i < h->masses.size(); ++i) {
            const double mid = 0.5 * (h->bin_edges[i] + h->bin_edges[i + 1]);
            total += h->masses[i] * radius(mid);
        }
        return total;
    }

    // Below p_star the predictor is clamped to zero, so integration starts there.
    const double p_star = radius.threshold(0.5, 0.5);
    double total = 0.0;
    for (const auto& s : segments_of(*dist.as_piecewise())) {
        if (s.density <= 0.0) continue;
        const double lo = std::max({s.lo, 0.5, p_star});
        total += s.density * integrate_radius(radius, lo, s.hi);
    }
    return total;
}

std::optional<double> theta_tabulated(double beta) {
    if (beta == 0.5) return 2.0;
    if (beta >= 0.8 && beta < 1.0) return 1.64;
    return std::nullopt;
}

double ratio_theoretical(const ConfidenceSpec& conf, std::uint64_t n, double beta, bool numeric_theta) {
    if (n == 0) throw std::invalid_argument("sample count must be at least 1");
    if (!(beta >= 0.5 && beta < 1.0)) throw std::invalid_argument("beta must lie in [0.5, 1)");
    const auto tabulated = theta_tabulated(beta);
    const double theta = (!numeric_theta && tabulated) ? *tabulated : theta_numeric(beta);
    return 1.0 - theta * conf.z() / std::sqrt(static_cast<double>(n));
}

double h_function(double p_a) {
    if (!(p_a > 0.5 && p_a < 1.0)) throw std::invalid_argument("h_function: p_a must lie in (0.5, 1)");
    const double q = 1.0 - p_a;
    const double numerator = std::pow(p_a, -0.365) * std::sqrt(q) + std::sqrt(p_a) * std::pow(q, -0.365);
    return numerator / (std::pow(p_a, kShoreExponent) - std::pow(q, kShoreExponent));
}

double h_interval_mean(double lower, double upper) {
    if (!(lower > 0.5 && upper <= 1.0 && lower < upper)) {
        throw std::invalid_argument("h_interval_mean: need 0.5 < lower < upper <= 1");
    }
    constexpr double tol = 1e-10;
    if (upper < 1.0) {
        return integrate_adaptive_simpson(h_function, lower, upper, tol) / (upper - lower);
    }
    // With p = 1 - u^(1/0.635) the integrand h(p) dp/du stays bounded, equal to 1/0.635 at u = 0.
    auto transformed = [](double u) {
        const double w = std::pow(u, 1.0 / kHSubstitutionPower);  // 1 - p
        const double p = 1.0 - w;
        if (w <= 0.0) return 1.0 / kHSubstitutionPower;
        const double scaled = (std::pow(p, -0.365) * std::pow(w, 0.865) + std::sqrt(p)) /
                              (std::pow(p, kShoreExponent) - std::pow(w, kShoreExponent));
        return scaled / kHSubstitutionPower;
    };
    const double u_max = std::pow(1.0 - lower, kHSubstitutionPower);
    return integrate_adaptive_simpson(transformed, 0.0, u_max, tol) / (1.0 - lower);
}

double theta_numeric(double beta) {
    if (!(beta > 0.5 && beta < 1.0)) throw std::invalid_argument("theta_numeric: beta must lie in (0.5, 1)");
    if (1.0 - beta < 1e-4) throw std::invalid_argument("theta_numeric: interval (beta, 1) is degenerate");
    return kShoreExponent * h_interval_mean(beta, 1.0);
}

double certified_accuracy(const PADistribution& dist, const AccuracyQuery& query, const SmoothingConfig& cfg,
                          bool ideal) {
    cfg.validate();
    if (!(query.p0 >= 0.5 && query.p0 <= 1.0)) throw std::invalid_argument("accuracy query p0 must lie in [0.5, 1]");
    if (ideal) return dist.mass_at_or_above(query.p0);
    const RadiusKernel kernel{cfg.sigma, cfg.conf.z(), static_cast<double>(cfg.n)};
    return dist.mass_at_or_above(kernel.threshold(query.p0, query.p0));
}

double accuracy_drop_bound(const ConfidenceSpec& conf, std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("sample count must be at least 1");
    return std::min(1.0, conf.z() / std::sqrt(static_cast<double>(n)));
}

PADistribution fit_empirical_pa(std::span<const double> estimates, std::size_t num_bins) {
    if (estimates.empty()) throw std::invalid_argument("fit_empirical_pa: no estimates");
    if (num_bins < 2) throw std::invalid_argument("fit_empirical_pa: need at least 2 bins");
    std::vector<double> counts(num_bins, 0.0);
    for (const double v : estimates) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("fit_empirical_pa: estimate outside [0, 1]");
        const auto bin = std::min(static_cast<std::size_t>(v * static_cast<double>(num_bins)), num_bins - 1);
        counts[bin] += 1.0;
    }
    std::vector<double> edges(num_bins + 1);
    for (std::size_t i = 0; i <= num_bins; ++i) edges[i] = static_cast<double>(i) / static_cast<double>(num_bins);
    const double total = static_cast<double>(estimates.size());
    for (auto& c : counts) c /= total;
    // Re-normalize against rounding so the unit-mass check holds exactly enough.
    const double sum = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (auto& c : counts) c /= sum;
    return PADistribution::empirical(std::move(edges), std::move(counts));
}

PADistribution read_empirical_csv(std::istream& in) {
    std::string line;
    auto strip = [](std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    };
    if (!std::getline(in, line)) throw std::invalid_argument("empirical CSV is empty");
    strip(line);
    if (line != "bin_left,bin_right,mass") throw std::invalid_argument("expected header 'bin_left,bin_right,mass'");
    std::vector<double> edges;
    std::vector<double> masses;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        strip(line);
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected 3 fields");
        }
        const std::string_view view(line);
        const auto left = parse_number<double>(view.substr(0, c1), "bin_left");
        const auto right = parse_number<double>(view.substr(c1 + 1, c2 - c1 - 1), "bin_right");
        const auto mass = parse_number<double>(view.substr(c2 + 1), "mass");
        if (edges.empty()) {
            edges.push_back(left);
        } else if (left != edges.back()) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": bins are not contiguous");
        }
        edges.push_back(right);
        masses.push_back(mass);
    }
    if (masses.empty()) throw std::invalid_argument("empirical CSV has no bins");
    return PADistribution::empirical(std::move(edges), std::move(masses));
}

PADistribution read_empirical_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open distribution file '" + path.string() + "'");
    return read_empirical_csv(in);
}

void write_empirical_csv(std::ostream& out, const PADistribution& dist) {
    const auto* h = dist.as_empirical();
    if (h == nullptr) throw std::invalid_argument("only empirical distributions have a CSV form");
    out << "bin_left,bin_right,mass\n";
    for (std::size_t i = 0; i < h->masses.size(); ++i) {
        out << format_double(h->bin_edges[i]) << ',' << format_double(h->bin_edges[i + 1]) << ','
            << format_double(h->masses[i]) << '\n';
    }
}

PADistribution parse_distribution_spec(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("distribution spec must be kind:details");
    const auto kind = text.substr(0, colon);
    const auto body = text.substr(colon + 1);
    if (kind == "empirical") return read_empirical_csv(std::filesystem::path(std::string(body)));
    if (kind == "uniform") return PADistribution::uniform_from(parse_number<double>(body, "uniform lower edge"));
    if (kind != "piecewise") throw std::invalid_argument("unknown distribution kind '" + std::string(kind) + "'");

    double k1 = 0.0, k2 = 0.0, beta = std::numeric_limits<double>::quiet_NaN();
    std::size_t pos = 0;
    while (pos <= body.size()) {
        const auto end = std::min(body.find(',', pos), body.size());
        const auto field = body.substr(pos, end - pos);
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) throw std::invalid_argument("piecewise field without '='");
        const auto key = field.substr(0, eq);
        const auto value = parse_number<double>(field.substr(eq + 1), std::string(key));
        if (key == "k1") {
            k1 = value;
        } else if (key == "k2") {
            k2 = value;
        } else if (key == "beta") {
            beta = value;
        } else {
            throw std::invalid_argument("unknown piecewise field '" + std::string(key) + "'");
        }
        pos = end + 1;
    }
    if (std::isnan(beta)) throw std::invalid_argument("piecewise distribution requires beta=");
    return PADistribution::piecewise(k1, k2, beta);
}

void to_json(nlohmann::json& j, const PADistribution& dist) {
    if (const auto* d = dist.as_piecewise()) {
        j = {{"kind", "piecewise"}, {"kappa1", d->kappa1}, {"kappa2", d->kappa2}, {"beta", d->beta}};
    } else {
        const auto* h = dist.as_empirical();
        j = {{"kind", "empirical"}, {"bin_edges", h->bin_edges}, {"masses", h->masses}};
    }
}

PADistribution distribution_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "piecewise") {
        return PADistribution::piecewise(j.value("kappa1", 0.0), j.value("kappa2", 0.0), j.at("beta").get<double>());
    }
    if (kind == "uniform") return PADistribution::uniform_from(j.at("lower").get<double>());
    if (kind == "empirical") {
        if (j.contains("path")) return read_empirical_csv(std::filesystem::path(j.at("path").get<std::string>()));
        return PADistribution::empirical(j.at("bin_edges").get<std::vector<double>>(),
                                         j.at("masses").get<std::vector<double>>());
    }
    throw std::invalid_argument("unknown distribution kind '" + kind + "'");
}

}  // namespace smoothcert
