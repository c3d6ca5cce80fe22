#include "smoothcert/certify.hpp"

#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "smoothcert/errors.hpp"
#include "smoothcert/parallel.hpp"
#include "smoothcert/rng.hpp"

namespace smoothcert {

namespace {

constexpr std::uint64_t kSelectionSalt = stable_hash("two-phase-selection");

CertificationOutcome bound_class(const VoteTally& tally, ClassLabel label, bool tie, const SmoothingConfig& cfg,
                                 BoundMethod method) {
    const ProbEstimate est(tally.count(label), tally.n);
    CertificationOutcome out;
    out.point_id = tally.point_id;
    out.majority_class = label;
    out.tie = tie;
    out.p_hat = est.p_hat();
    out.p_lower = method == BoundMethod::clopper_pearson ? cp_lower_bound(est, cfg.conf) : clt_lower_bound(est, cfg.conf);
    out.n = tally.n;
    out.alpha = cfg.conf.alpha;
    out.sigma = cfg.sigma;
    out.bound_method = method;
    if (out.p_lower >= 0.5) {
        out.decision = Certified{label, certified_radius(out.p_lower, cfg.sigma)};
        out.saturated = radius_saturated(out.p_lower);
    } else {
        out.decision = Abstain{};
    }
    return out;
}

}  // namespace

double CertificationOutcome::radius() const noexcept {
    if (const auto* c = std::get_if<Certified>(&decision)) return c->radius;
    return 0.0;
}

std::pair<ClassLabel, bool> majority_class(const VoteTally& tally) {
    ClassLabel best = 0;
    std::uint64_t best_count = 0;
    bool tie = false;
    bool first = true;
    // std::map iterates labels in increasing order, so the first maximum is the smallest label.
    for (const auto& [label, c] : tally.counts) {
        if (first || c > best_count) {
            best = label;
            best_count = c;
            tie = false;
            first = false;
        } else if (c == best_count) {
            tie = true;
        }
    }
    return {best, tie};
}

CertificationOutcome certify_tally(const VoteTally& tally, const SmoothingConfig& cfg, BoundMethod method) {
    cfg.validate();
    tally.validate();
    const auto [label, tie] = majority_class(tally);
    return bound_class(tally, label, tie, cfg, method);
}

CertificationOutcome certify(const VoteSource& source, std::string_view point_id, const SmoothingConfig& cfg,
                             BoundMethod method, const CertifyOptions& options) {
    cfg.validate();
    if (!options.two_phase) {
        return certify_tally(source.draw(point_id, cfg.n, options.seed, cfg.sigma), cfg, method);
    }
    if (options.n0 == 0) throw std::invalid_argument("two-phase certification needs n0 >= 1");
    const auto selection = source.draw(point_id, options.n0, derive_seed(options.seed, kSelectionSalt), cfg.sigma);
    selection.validate();
    const auto [label, tie] = majority_class(selection);
    const auto estimation = source.draw(point_id, cfg.n, options.seed, cfg.sigma);
    estimation.validate();
    return bound_class(estimation, label, tie, cfg, method);
}

std::vector<CertificationOutcome> certify_batch(const VoteSource& source, const std::vector<std::string>& point_ids,
                                                const SmoothingConfig& cfg, BoundMethod method,
                                                const CertifyOptions& options, std::size_t parallelism) {
    if (point_ids.empty()) throw std::invalid_argument("certify_batch: empty point list");
    cfg.validate();
    std::vector<CertificationOutcome> results(point_ids.size());
    parallel_for(point_ids.size(), parallelism, [&](std::size_t i) {
        try {
            results[i] = certify(source, point_ids[i], cfg, method, options);
        } catch (const OracleError& e) {
            throw BatchError(i, point_ids[i], e.what(), true);
        } catch (const std::exception& e) {
            throw BatchError(i, point_ids[i], e.what(), false);
        }
    });
    return results;
}

std::string_view to_string(BoundMethod method) {
    return method == BoundMethod::clopper_pearson ? "clopper_pearson" : "clt";
}

BoundMethod parse_bound_method(std::string_view text) {
    if (text == "cp" || text == "clopper_pearson") return BoundMethod::clopper_pearson;
    if (text == "clt") return BoundMethod::clt;
    throw std::invalid_argument("unknown bound method '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const CertificationOutcome& o) {
    nlohmann::json decision;
    if (const auto* c = std::get_if<Certified>(&o.decision)) {
        decision = {{"type", "certified"}, {"class", c->label}, {"radius", c->radius}};
    } else {
        decision = {{"type", "abstain"}};
    }
    j = nlohmann::json{{"point_id", o.point_id},
                       {"decision", decision},
                       {"majority_class", o.majority_class},
                       {"p_hat", o.p_hat},
                       {"p_lower", o.p_lower},
                       {"n", o.n},
                       {"alpha", o.alpha},
                       {"sigma", o.sigma},
                       {"bound_method", std::string(to_string(o.bound_method))},
                       {"tie", o.tie},
                       {"saturated", o.saturated}};
}

void from_json(const nlohmann::json& j, CertificationOutcome& o) {
    j.at("point_id").get_to(o.point_id);
    const auto& decision = j.at("decision");
    const auto type = decision.at("type").get<std::string>();
    if (type == "certified") {
        o.decision = Certified{decision.at("class").get<ClassLabel>(), decision.at("radius").get<double>()};
    } else if (type == "abstain") {
        o.decision = Abstain{};
    } else {
        throw std::invalid_argument("unknown decision type '" + type + "'");
    }
    j.at("majority_class").get_to(o.majority_class);
    j.at("p_hat").get_to(o.p_hat);
    j.at("p_lower").get_to(o.p_lower);
    j.at("n").get_to(o.n);
    j.at("alpha").get_to(o.alpha);
    j.at("sigma").get_to(o.sigma);
    o.bound_method = parse_bound_method(j.at("bound_method").get<std::string>());
    o.tie = j.value("tie", false);
    o.saturated = j.value("saturated", false);
}

void write_outcomes_jsonl(std::ostream& out, const std::vector<CertificationOutcome>& outcomes) {
    for (const auto& o : outcomes) out << nlohmann::json(o).dump() << '\n';
}

}  // namespace smoothcert
