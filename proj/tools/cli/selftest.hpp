// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qaibp/network.hpp"

namespace qaibp::cli {

/// Small dense network with 1-3 inputs, 4-6 bit formats, 1-2 hidden layers of
/// at most 8 ReLU-N units and 2-4 classes.
QNetwork random_small_network(std::mt19937_64& rng);

struct SelftestOptions {
    std::size_t cases = 100;
    std::uint64_t seed = 0;
};

struct SelftestCheck {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
};

/// Cross-checks the verifier against exhaustive enumeration, interval
/// propagation against the exact forward pass, and the robust construction
/// against both. `progress` receives each finished check.
std::vector<SelftestCheck> run_selftest(const SelftestOptions& options,
                                        const std::function<void(const SelftestCheck&)>& progress = {});

}  // namespace qaibp::cli
