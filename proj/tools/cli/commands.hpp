// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qaibp/error.hpp"
#include "qaibp/synth/synth.hpp"

namespace qaibp::cli {

// Exit codes. Library errors exit with error_base + their ErrorCode value and
// print "error: <Name>: <message>" on stderr.
inline constexpr int exit_ok = 0;
inline constexpr int exit_vulnerable = 1;  // verify: at least one sample vulnerable, none undecided
inline constexpr int exit_undecided = 2;   // verify: at least one sample undecided
inline constexpr int exit_usage = 3;
inline constexpr int exit_error_base = 10;
inline constexpr int exit_internal = 99;

inline constexpr const char* workers_env = "QAIBP_WORKERS";

int exit_code(ErrorCode code);

/// Worker count from QAIBP_WORKERS, or 1 when unset. Throws ConfigError on
/// a malformed value.
std::size_t default_workers();

/// Parses "x:label,x:label,..." into a 1-D point dataset.
synth::PointDataset1D parse_points(const std::string& spec, int bits, std::size_t class_count);

/// Runs one command line (without the program name). All output goes to the
/// given streams; the return value is the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qaibp::cli
