#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <sys/types.h>

#include "smoothcert/votes.hpp"

namespace smoothcert {

/// Greeting sent by the harness; the adapter answers `READY <num_classes>`.
inline constexpr std::string_view kProtocolHello = "HELLO smoothcert-oracle 1";

/// One adapter subprocess speaking the line protocol over its stdin/stdout.
///
///   -> HELLO smoothcert-oracle 1        <- READY <num_classes>
///   -> SAMPLE <point_id> <n> <seed> <sigma>
///   <- COUNTS <point_id> <k> <class>:<count> ...   or   ERROR <message>
///   -> BYE                              (adapter exits 0)
///
/// Not thread-safe; ExternalOraclePool serializes access.
class ExternalOracleClient {
public:
    ExternalOracleClient(const std::string& command, int timeout_ms = 60'000);
    ~ExternalOracleClient();

    ExternalOracleClient(const ExternalOracleClient&) = delete;
    ExternalOracleClient& operator=(const ExternalOracleClient&) = delete;

    std::uint32_t num_classes() const noexcept { return num_classes_; }

    /// `stream_seed` is forwarded verbatim in the SAMPLE line.
    VoteTally sample(std::string_view point_id, std::uint64_t n, std::uint64_t stream_seed, double sigma);

    /// Sends BYE and reaps the process. Throws ProtocolError on a nonzero exit status.
    void shutdown();

private:
    void send_line(std::string_view line);
    std::string read_line();
    [[noreturn]] void fail(const std::string& what);
    int reap(bool force) noexcept;

    std::string command_;
    int timeout_ms_;
    int fd_ = -1;
    pid_t pid_ = -1;
    std::string buffer_;
    std::uint32_t num_classes_ = 0;
    bool closed_ = false;
};

/// Parses a COUNTS/ERROR response line. Exposed for tests.
VoteTally parse_counts_response(std::string_view line, std::string_view point_id, std::uint64_t n);

/// Vote source backed by a fixed pool of adapter processes.
class ExternalOraclePool final : public VoteSource {
public:
    explicit ExternalOraclePool(const ExternalOracle& spec);
    ~ExternalOraclePool() override;

    VoteTally draw(std::string_view point_id, std::uint64_t n, std::uint64_t seed,
                   double sigma) const override;

    std::uint32_t num_classes() const noexcept { return num_classes_; }
    std::size_t size() const noexcept { return clients_.size(); }

    /// Shuts every adapter down; throws ProtocolError if any exited abnormally.
    void shutdown();

private:
    std::vector<std::unique_ptr<ExternalOracleClient>> clients_;
    mutable std::mutex mutex_;
    mutable std::condition_variable available_;
    mutable std::vector<std::size_t> idle_;
    std::uint32_t num_classes_ = 0;
};

}  // namespace smoothcert
