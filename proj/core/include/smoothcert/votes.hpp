#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace smoothcert {

/// Class labels are non-negative integers; label 0 is the true class of synthetic points.
using ClassLabel = std::uint32_t;

/// Vote counts of one point over its classes.
struct VoteTally {
    std::string point_id;
    std::uint64_t n = 0;
    std::map<ClassLabel, std::uint64_t> counts;

    std::uint64_t count(ClassLabel label) const;
    /// Throws std::invalid_argument unless n >= 1 and the counts sum to n.
    void validate() const;

    friend bool operator==(const VoteTally&, const VoteTally&) = default;
};

enum class RivalPolicy {
    single_rival,    ///< all non-top mass on class 1
    uniform_rivals,  ///< non-top mass split evenly over classes 1..K-1
};

struct SyntheticOracle {
    double p_a = 0.5;
    std::uint32_t num_classes = 2;
    RivalPolicy rival_policy = RivalPolicy::single_rival;
};

struct RecordedOracle {
    std::filesystem::path path;
};

struct ExternalOracle {
    std::string command;
    int protocol_version = 1;
    std::size_t pool_size = 1;
    int timeout_ms = 60'000;
};

using OracleSpec = std::variant<SyntheticOracle, RecordedOracle, ExternalOracle>;

/// Parses `synthetic:pA=0.9,k=10[,rivals=single|uniform]`, `recorded:PATH` or `external:CMD`.
/// Throws std::invalid_argument on malformed input.
OracleSpec parse_oracle_spec(std::string_view text);

void validate(const SyntheticOracle& oracle);

/// Anything that can stand in for the base classifier.
///
/// Implementations must be safe to call concurrently and deterministic in
/// (point_id, n, seed).
class VoteSource {
public:
    virtual ~VoteSource() = default;

    /// `seed` is the global seed; per-point streams are derived from it.
    /// `sigma` is informational and only forwarded to external adapters.
    virtual VoteTally draw(std::string_view point_id, std::uint64_t n, std::uint64_t seed,
                           double sigma) const = 0;
};

/// Seed of the stream dedicated to one point under a global seed.
std::uint64_t point_stream_seed(std::uint64_t global_seed, std::string_view point_id);

class SyntheticVoteSource final : public VoteSource {
public:
    explicit SyntheticVoteSource(SyntheticOracle oracle);

    VoteTally draw(std::string_view point_id, std::uint64_t n, std::uint64_t seed,
                   double sigma) const override;

    const SyntheticOracle& oracle() const noexcept { return oracle_; }

private:
    SyntheticOracle oracle_;
};

/// Tallies loaded from a `point_id,class,count` CSV file.
class RecordedVotes final : public VoteSource {
public:
    static RecordedVotes from_file(const std::filesystem::path& path);
    static RecordedVotes parse(std::istream& in, const std::string& source_name = "<stream>");

    /// The tally is returned verbatim; n and seed are ignored.
    VoteTally draw(std::string_view point_id, std::uint64_t n, std::uint64_t seed,
                   double sigma) const override;

    const VoteTally& lookup(std::string_view point_id) const;
    /// Point ids in file order.
    const std::vector<std::string>& point_ids() const noexcept { return order_; }

private:
    std::unordered_map<std::string, VoteTally> tallies_;
    std::vector<std::string> order_;
};

void write_recorded_votes(std::ostream& out, const std::vector<VoteTally>& tallies);

/// Builds the runtime source for a spec. External oracles spawn their adapter processes here.
std::unique_ptr<VoteSource> make_vote_source(const OracleSpec& spec);

inline VoteTally draw_votes(const VoteSource& source, std::string_view point_id, std::uint64_t n,
                            std::uint64_t seed, double sigma = 0.0) {
    return source.draw(point_id, n, seed, sigma);
}

}  // namespace smoothcert
