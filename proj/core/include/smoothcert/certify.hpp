#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "smoothcert/radius_model.hpp"
#include "smoothcert/votes.hpp"

namespace smoothcert {

enum class BoundMethod { clopper_pearson, clt };

struct Certified {
    ClassLabel label = 0;
    double radius = 0.0;

    friend bool operator==(const Certified&, const Certified&) = default;
};

struct Abstain {
    friend bool operator==(const Abstain&, const Abstain&) = default;
};

using Decision = std::variant<Certified, Abstain>;

/// Result of one run of the certification procedure.
struct CertificationOutcome {
    std::string point_id;
    Decision decision = Abstain{};
    ClassLabel majority_class = 0;  ///< class whose probability was bounded
    double p_hat = 0.0;
    double p_lower = 0.0;
    std::uint64_t n = 0;
    double alpha = 0.0;
    double sigma = 0.0;
    BoundMethod bound_method = BoundMethod::clopper_pearson;
    bool tie = false;        ///< the majority was decided by the smallest-label rule
    bool saturated = false;  ///< p_lower was capped before taking the quantile

    bool certified() const noexcept { return std::holds_alternative<Certified>(decision); }
    /// Radius when certified, 0 otherwise.
    double radius() const noexcept;

    friend bool operator==(const CertificationOutcome&, const CertificationOutcome&) = default;
};

struct CertifyOptions {
    std::uint64_t seed = 0;
    /// Select the class from n0 separate draws, then bound it on n fresh draws.
    bool two_phase = false;
    std::uint64_t n0 = 100;
};

/// Majority class of a tally; ties go to the smallest label. Second member reports a tie.
std::pair<ClassLabel, bool> majority_class(const VoteTally& tally);

/// Applies the lower bound and the abstain rule to an already drawn tally.
CertificationOutcome certify_tally(const VoteTally& tally, const SmoothingConfig& cfg, BoundMethod method);

/// Draws cfg.n votes and certifies the majority class.
CertificationOutcome certify(const VoteSource& source, std::string_view point_id, const SmoothingConfig& cfg,
                             BoundMethod method = BoundMethod::clopper_pearson, const CertifyOptions& options = {});

/// Certifies every point; output order matches input order for any parallelism.
/// Throws BatchError for the lowest-index failing point; std::invalid_argument for an empty list.
std::vector<CertificationOutcome> certify_batch(const VoteSource& source, const std::vector<std::string>& point_ids,
                                                const SmoothingConfig& cfg, BoundMethod method,
                                                const CertifyOptions& options = {}, std::size_t parallelism = 1);

std::string_view to_string(BoundMethod method);
BoundMethod parse_bound_method(std::string_view text);

void to_json(nlohmann::json& j, const CertificationOutcome& outcome);
void from_json(const nlohmann::json& j, CertificationOutcome& outcome);

/// One JSON object per line.
void write_outcomes_jsonl(std::ostream& out, const std::vector<CertificationOutcome>& outcomes);

}  // namespace smoothcert
