// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qaibp {

enum class ErrorCode {
    InvalidValue = 1,
    ShapeError,
    FormatError,
    InvalidLabel,
    UnsupportedArchitecture,
    SingletonRegion,
    BudgetExceeded,
    GapViolation,
    NumericError,
    ConfigError,
    CorruptHeader,
    CountMismatch,
    TruncatedFile,
    IoError,
    VersionMismatch,
};

/// Stable, machine-parsable name (e.g. "ShapeError") used in CLI diagnostics.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace qaibp
