// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/error.hpp"

namespace qaibp {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::UnsupportedArchitecture: return "UnsupportedArchitecture";
    case ErrorCode::SingletonRegion: return "SingletonRegion";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::GapViolation: return "GapViolation";
    case ErrorCode::NumericError: return "NumericError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    }
    return "Unknown";
}

}  // namespace qaibp
