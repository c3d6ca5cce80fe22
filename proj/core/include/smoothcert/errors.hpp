#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace smoothcert {

/// Base for failures that originate in a vote source rather than in the caller's arguments.
class OracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A recorded votes file has no tally for the requested point.
class RecordedLookupError : public OracleError {
public:
    using OracleError::OracleError;
};

/// The external oracle process broke the line protocol or exited abnormally.
class ProtocolError : public OracleError {
public:
    using OracleError::OracleError;
};

/// No probability below one reproduces the requested radius.
class SaturatedError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised by batch certification; carries the index of the first failing point.
class BatchError : public std::runtime_error {
public:
    BatchError(std::size_t index, std::string point_id, const std::string& what)
        : std::runtime_error("point #" + std::to_string(index) + " (" + point_id + "): " + what),
          index_(index),
          point_id_(std::move(point_id)),
          oracle_failure_(false) {}

    BatchError(std::size_t index, std::string point_id, const std::string& what, bool oracle_failure)
        : BatchError(index, std::move(point_id), what) {
        oracle_failure_ = oracle_failure;
    }

    std::size_t index() const noexcept { return index_; }
    const std::string& point_id() const noexcept { return point_id_; }
    /// True when the underlying cause was an OracleError.
    bool oracle_failure() const noexcept { return oracle_failure_; }

private:
    std::size_t index_;
    std::string point_id_;
    bool oracle_failure_;
};

}  // namespace smoothcert
