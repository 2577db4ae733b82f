// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "qaibp/fixedpoint.hpp"

namespace qaibp {

struct LabeledSample {
    QTensor input;
    std::size_t label = 0;
};

using Dataset = std::vector<LabeledSample>;

}  // namespace qaibp
