// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trainscan {

/// Coarse failure classes. The CLI prints the name as a machine-parsable code.
enum class ErrorCode {
    io,
    format,
    invalid_argument,
    overlap,
    not_found,
    out_of_range,
    protocol,
    job_failed,
    permission,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::overlap: return "overlap";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::job_failed: return "job_failed";
    case ErrorCode::permission: return "permission";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace trainscan
