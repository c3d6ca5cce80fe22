#include "smoothcert/external_oracle.hpp"

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <stdexcept>
#include <thread>

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include "smoothcert/errors.hpp"
#include "smoothcert/format.hpp"

namespace smoothcert {

namespace {

std::vector<std::string_view> tokens(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < line.size()) {
        const auto end = line.find(' ', pos);
        out.push_back(line.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    return out;
}

template <typename T>
bool parse_uint(std::string_view text, T& value) {
    if (text.empty()) return false;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

std::string describe_status(int status) {
    if (WIFEXITED(status)) return "exit status " + std::to_string(WEXITSTATUS(status));
    if (WIFSIGNALED(status)) return "signal " + std::to_string(WTERMSIG(status));
    return "unknown status";
}

bool has_whitespace(std::string_view text) {
    return text.find_first_of(" \t\r\n") != std::string_view::npos;
}

}  // namespace

VoteTally parse_counts_response(std::string_view line, std::string_view point_id, std::uint64_t n) {
    if (line.starts_with("ERROR")) {
        const auto message = line.size() > 6 ? line.substr(6) : std::string_view("(no message)");
        throw OracleError("adapter reported error for '" + std::string(point_id) + "': " + std::string(message));
    }
    const auto parts = tokens(line);
    if (parts.size() < 3 || parts[0] != "COUNTS") {
        throw ProtocolError("expected COUNTS response, got '" + std::string(line) + "'");
    }
    if (parts[1] != point_id) {
        throw ProtocolError("COUNTS for '" + std::string(parts[1]) + "' while waiting for '" +
                            std::string(point_id) + "'");
    }
    std::size_t k = 0;
    if (!parse_uint(parts[2], k) || parts.size() != 3 + k) {
        throw ProtocolError("COUNTS pair count does not match: '" + std::string(line) + "'");
    }
    VoteTally tally;
    tally.point_id = std::string(point_id);
    tally.n = n;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto pair = parts[3 + i];
        const auto colon = pair.find(':');
        ClassLabel label = 0;
        std::uint64_t count = 0;
        if (colon == std::string_view::npos || !parse_uint(pair.substr(0, colon), label) ||
            !parse_uint(pair.substr(colon + 1), count)) {
            throw ProtocolError("malformed class:count pair '" + std::string(pair) + "'");
        }
        if (tally.counts.contains(label)) throw ProtocolError("duplicate class " + std::to_string(label));
        if (count > 0) tally.counts[label] = count;
        total += count;
    }
    if (total != n) {
        throw ProtocolError("counts for '" + std::string(point_id) + "' sum to " + std::to_string(total) +
                            ", expected " + std::to_string(n));
    }
    return tally;
}

ExternalOracleClient::ExternalOracleClient(const std::string& command, int timeout_ms)
    : command_(command), timeout_ms_(timeout_ms) {
    if (command.empty()) throw std::invalid_argument("external oracle command is empty");
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
        throw ProtocolError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        ::close(fds[0]);
        ::close(fds[1]);
        throw ProtocolError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(fds[1], STDIN_FILENO);
        ::dup2(fds[1], STDOUT_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
    pid_ = pid;

    send_line(kProtocolHello);
    const auto reply = read_line();
    const auto parts = tokens(reply);
    if (parts.size() != 2 || parts[0] != "READY" || !parse_uint(parts[1], num_classes_) || num_classes_ < 2) {
        fail("bad handshake reply '" + reply + "'");
    }
}

ExternalOracleClient::~ExternalOracleClient() {
    if (closed_) return;
    try {
        send_line("BYE");
    } catch (...) {
    }
    reap(false);
}

void ExternalOracleClient::fail(const std::string& what) {
    const int status = reap(true);
    closed_ = true;
    std::string message = "external oracle '" + command_ + "': " + what;
    if (status >= 0) message += " (" + describe_status(status) + ")";
    throw ProtocolError(message);
}

int ExternalOracleClient::reap(bool force) noexcept {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_WR);
    }
    int status = -1;
    if (pid_ > 0) {
        if (force) ::kill(pid_, SIGTERM);
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
        while (true) {
            const pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_ || r < 0) break;
            if (std::chrono::steady_clock::now() > deadline) {
                ::kill(pid_, SIGKILL);
                ::waitpid(pid_, &status, 0);
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
        pid_ = -1;
    }
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    closed_ = true;
    return status;
}

void ExternalOracleClient::send_line(std::string_view line) {
    if (closed_) throw ProtocolError("external oracle already closed");
    std::string data(line);
    data.push_back('\n');
    std::size_t sent = 0;
    while (sent < data.size()) {
        const auto r = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (r < 0) {
            if (errno == EINTR) continue;
            fail(std::string("write failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(r);
    }
}

std::string ExternalOracleClient::read_line() {
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, timeout_ms_);
        if (ready == 0) fail("timed out waiting for a response");
        if (ready < 0) {
            if (errno == EINTR) continue;
            fail(std::string("poll failed: ") + std::strerror(errno));
        }
        char chunk[4096];
        const auto r = ::recv(fd_, chunk, sizeof chunk, 0);
        if (r == 0) fail("adapter closed its output");
        if (r < 0) {
            if (errno == EINTR) continue;
            fail(std::string("read failed: ") + std::strerror(errno));
        }
        buffer_.append(chunk, static_cast<std::size_t>(r));
    }
}

VoteTally ExternalOracleClient::sample(std::string_view point_id, std::uint64_t n, std::uint64_t stream_seed,
                                       double sigma) {
    if (point_id.empty() || has_whitespace(point_id)) {
        throw std::invalid_argument("point ids sent to an external oracle must be non-empty without whitespace");
    }
    if (n == 0) throw std::invalid_argument("draw_votes: n must be at least 1");
    send_line("SAMPLE " + std::string(point_id) + " " + std::to_string(n) + " " + std::to_string(stream_seed) +
              " " + format_double(sigma));
    const auto reply = read_line();
    return parse_counts_response(reply, point_id, n);
}

void ExternalOracleClient::shutdown() {
    if (closed_) return;
    send_line("BYE");
    const int status = reap(false);
    if (status < 0 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw ProtocolError("external oracle '" + command_ + "' did not exit cleanly (" +
                            (status < 0 ? std::string("not reaped") : describe_status(status)) + ")");
    }
}

ExternalOraclePool::ExternalOraclePool(const ExternalOracle& spec) {
    if (spec.protocol_version != 1) {
        throw std::invalid_argument("unsupported protocol version " + std::to_string(spec.protocol_version));
    }
    const std::size_t size = spec.pool_size == 0 ? 1 : spec.pool_size;
    for (std::size_t i = 0; i < size; ++i) {
        clients_.push_back(std::make_unique<ExternalOracleClient>(spec.command, spec.timeout_ms));
        if (i == 0) {
            num_classes_ = clients_.front()->num_classes();
        } else if (clients_.back()->num_classes() != num_classes_) {
            throw ProtocolError("adapters in one pool disagree on the class count");
        }
        idle_.push_back(size - 1 - i);
    }
}

ExternalOraclePool::~ExternalOraclePool() = default;

VoteTally ExternalOraclePool::draw(std::string_view point_id, std::uint64_t n, std::uint64_t seed,
                                   double sigma) const {
    std::size_t slot = 0;
    {
        std::unique_lock lock(mutex_);
        available_.wait(lock, [&] { return !idle_.empty(); });
        slot = idle_.back();
        idle_.pop_back();
    }
    struct Release {
        const ExternalOraclePool* pool;
        std::size_t slot;
        ~Release() {
            {
                std::lock_guard lock(pool->mutex_);
                pool->idle_.push_back(slot);
            }
            pool->available_.notify_one();
        }
    } release{this, slot};

    auto tally = clients_[slot]->sample(point_id, n, point_stream_seed(seed, point_id), sigma);
    for (const auto& [label, c] : tally.counts) {
        if (label >= num_classes_) {
            throw ProtocolError("class " + std::to_string(label) + " outside the announced " +
                                std::to_string(num_classes_) + " classes");
        }
    }
    return tally;
}

void ExternalOraclePool::shutdown() {
    std::lock_guard lock(mutex_);
    std::string failures;
    for (auto& client : clients_) {
        try {
            client->shutdown();
        } catch (const ProtocolError& e) {
            if (!failures.empty()) failures += "; ";
            failures += e.what();
        }
    }
    if (!failures.empty()) throw ProtocolError(failures);
}

}  // namespace smoothcert
