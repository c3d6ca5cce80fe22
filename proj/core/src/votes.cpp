#include "smoothcert/votes.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "smoothcert/errors.hpp"
#include "smoothcert/external_oracle.hpp"
#include "smoothcert/rng.hpp"

namespace smoothcert {

namespace {

template <typename T>
T parse_number(std::string_view text, const std::string& what) {
    T value{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw std::invalid_argument("malformed " + what + ": '" + std::string(text) + "'");
    }
    return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

SyntheticOracle parse_synthetic(std::string_view body) {
    SyntheticOracle oracle;
    bool have_pa = false;
    for (const auto field : split(body, ',')) {
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) {
            throw std::invalid_argument("synthetic oracle field without '=': '" + std::string(field) + "'");
        }
        const auto key = field.substr(0, eq);
        const auto value = field.substr(eq + 1);
        if (key == "pA" || key == "pa" || key == "p_a") {
            oracle.p_a = parse_number<double>(value, "pA");
            have_pa = true;
        } else if (key == "k") {
            oracle.num_classes = parse_number<std::uint32_t>(value, "class count");
        } else if (key == "rivals") {
            if (value == "single") {
                oracle.rival_policy = RivalPolicy::single_rival;
            } else if (value == "uniform") {
                oracle.rival_policy = RivalPolicy::uniform_rivals;
            } else {
                throw std::invalid_argument("rivals must be 'single' or 'uniform'");
            }
        } else {
            throw std::invalid_argument("unknown synthetic oracle field '" + std::string(key) + "'");
        }
    }
    if (!have_pa) throw std::invalid_argument("synthetic oracle requires pA=");
    validate(oracle);
    return oracle;
}

}  // namespace

std::uint64_t VoteTally::count(ClassLabel label) const {
    const auto it = counts.find(label);
    return it == counts.end() ? 0 : it->second;
}

void VoteTally::validate() const {
    if (n == 0) throw std::invalid_argument("tally for '" + point_id + "' has no draws");
    std::uint64_t total = 0;
    for (const auto& [label, c] : counts) total += c;
    if (total != n) {
        throw std::invalid_argument("tally for '" + point_id + "' sums to " + std::to_string(total) +
                                    ", expected " + std::to_string(n));
    }
}

void validate(const SyntheticOracle& oracle) {
    if (!(oracle.p_a >= 0.0 && oracle.p_a <= 1.0)) throw std::invalid_argument("synthetic pA must lie in [0, 1]");
    if (oracle.num_classes < 2) throw std::invalid_argument("synthetic oracle needs at least 2 classes");
}

OracleSpec parse_oracle_spec(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw std::invalid_argument("oracle spec must be kind:details, got '" + std::string(text) + "'");
    }
    const auto kind = text.substr(0, colon);
    const auto body = text.substr(colon + 1);
    if (body.empty()) throw std::invalid_argument("empty oracle details");
    if (kind == "synthetic") return parse_synthetic(body);
    if (kind == "recorded") return RecordedOracle{std::filesystem::path(std::string(body))};
    if (kind == "external") return ExternalOracle{std::string(body)};
    throw std::invalid_argument("unknown oracle kind '" + std::string(kind) + "'");
}

std::uint64_t point_stream_seed(std::uint64_t global_seed, std::string_view point_id) {
    return derive_seed(global_seed, stable_hash(point_id));
}

SyntheticVoteSource::SyntheticVoteSource(SyntheticOracle oracle) : oracle_(oracle) { validate(oracle_); }

VoteTally SyntheticVoteSource::draw(std::string_view point_id, std::uint64_t n, std::uint64_t seed,
                                    double /*sigma*/) const {
    if (n == 0) throw std::invalid_argument("draw_votes: n must be at least 1");
    const std::uint64_t key = point_stream_seed(seed, point_id);

    VoteTally tally;
    tally.point_id = std::string(point_id);
    tally.n = n;

    CounterStream top_stream(key);
    const std::uint64_t top = sample_binomial(top_stream, n, oracle_.p_a);
    if (top > 0) tally.counts[0] = top;

    std::uint64_t rest = n - top;
    if (rest == 0) return tally;
    if (oracle_.rival_policy == RivalPolicy::single_rival) {
        tally.counts[1] = rest;
        return tally;
    }
    const std::uint32_t rivals = oracle_.num_classes - 1;
    for (std::uint32_t j = 1; j < rivals && rest > 0; ++j) {
        CounterStream rival_stream(derive_seed(key, static_cast<std::uint64_t>(j)));
        const std::uint64_t c = sample_binomial(rival_stream, rest, 1.0 / static_cast<double>(rivals - j + 1));
        if (c > 0) tally.counts[j] = c;
        rest -= c;
    }
    if (rest > 0) tally.counts[rivals] = rest;
    return tally;
}

RecordedVotes RecordedVotes::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open recorded votes file '" + path.string() + "'");
    return parse(in, path.string());
}

RecordedVotes RecordedVotes::parse(std::istream& in, const std::string& source_name) {
    RecordedVotes out;
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "point_id,class,count") {
        throw std::invalid_argument(source_name + ": expected header 'point_id,class,count'");
    }
    std::size_t line_no = 1;
    VoteTally* current = nullptr;
    while (std::getline(in, line)) {
        ++line_no;
        const auto row = strip_cr(line);
        if (row.empty()) continue;
        const auto where = source_name + ":" + std::to_string(line_no);
        const auto fields = split(row, ',');
        if (fields.size() != 3) throw std::invalid_argument(where + ": expected 3 fields");
        const std::string id(fields[0]);
        if (id.empty()) throw std::invalid_argument(where + ": empty point_id");
        const auto label = parse_number<ClassLabel>(fields[1], "class");
        const auto count = parse_number<std::uint64_t>(fields[2], "count");

        if (current == nullptr || current->point_id != id) {
            if (out.tallies_.contains(id)) {
                throw std::invalid_argument(where + ": rows for point '" + id + "' are not contiguous");
            }
            current = &out.tallies_[id];
            current->point_id = id;
            out.order_.push_back(id);
        }
        if (!current->counts.emplace(label, count).second) {
            throw std::invalid_argument(where + ": duplicate class " + std::to_string(label));
        }
        current->n += count;
    }
    if (out.order_.empty()) throw std::invalid_argument(source_name + ": no tallies");
    for (const auto& id : out.order_) {
        auto& tally = out.tallies_.at(id);
        // Zero-count rows carry no information.
        std::erase_if(tally.counts, [](const auto& kv) { return kv.second == 0; });
        if (tally.n == 0) throw std::invalid_argument(source_name + ": point '" + id + "' has no votes");
    }
    return out;
}

const VoteTally& RecordedVotes::lookup(std::string_view point_id) const {
    const auto it = tallies_.find(std::string(point_id));
    if (it == tallies_.end()) {
        throw RecordedLookupError("no recorded tally for point '" + std::string(point_id) + "'");
    }
    return it->second;
}

VoteTally RecordedVotes::draw(std::string_view point_id, std::uint64_t, std::uint64_t, double) const {
    return lookup(point_id);
}

void write_recorded_votes(std::ostream& out, const std::vector<VoteTally>& tallies) {
    out << "point_id,class,count\n";
    for (const auto& tally : tallies) {
        for (const auto& [label, c] : tally.counts) out << tally.point_id << ',' << label << ',' << c << '\n';
    }
}

std::unique_ptr<VoteSource> make_vote_source(const OracleSpec& spec) {
    return std::visit(
        [](const auto& oracle) -> std::unique_ptr<VoteSource> {
            using T = std::decay_t<decltype(oracle)>;
            if constexpr (std::is_same_v<T, SyntheticOracle>) {
                return std::make_unique<SyntheticVoteSource>(oracle);
            } else if constexpr (std::is_same_v<T, RecordedOracle>) {
                return std::make_unique<RecordedVotes>(RecordedVotes::from_file(oracle.path));
            } else {
                return std::make_unique<ExternalOraclePool>(oracle);
            }
        },
        spec);
}

}  // namespace smoothcert
