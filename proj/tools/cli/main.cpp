// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
    std::ios::sync_with_stdio(true);
    return qaibp::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
