// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/train/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qaibp/error.hpp"

namespace qaibp::train {

double qaibp_loss(std::span<const double> lower, std::span<const double> upper, std::size_t label,
                  std::span<double> dlower, std::span<double> dupper) {
    if (lower.size() != upper.size()) fail(ErrorCode::ShapeError, "logit bounds differ in size");
    if (label >= lower.size()) {
        fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range");
    }
    const bool grad = !dlower.empty();
    if (grad) {
        std::fill(dlower.begin(), dlower.end(), 0.0);
        std::fill(dupper.begin(), dupper.end(), 0.0);
    }
    double loss = 0.0;
    for (std::size_t j = 0; j < lower.size(); ++j) {
        if (j == label) continue;
        const double v = upper[j] - lower[label];
        if (v >= 0) {
            loss += v;
            if (grad) {
                dupper[j] += 1.0;
                dlower[label] -= 1.0;
            }
        }
    }
    return loss;
}

double margin_loss(std::span<const double> margins, std::span<double> dmargins) {
    double loss = 0.0;
    for (std::size_t j = 0; j < margins.size(); ++j) {
        const bool active = margins[j] <= 0;
        if (active) loss -= margins[j];
        if (!dmargins.empty()) dmargins[j] = active ? -1.0 : 0.0;
    }
    return loss;
}

double cross_entropy(std::span<const double> logits, std::size_t label, std::span<double> dlogits) {
    if (label >= logits.size()) {
        fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - top);
    const double lse = top + std::log(z);
    if (!dlogits.empty()) {
        for (std::size_t i = 0; i < logits.size(); ++i) {
            dlogits[i] = std::exp(logits[i] - lse) - (i == label ? 1.0 : 0.0);
        }
    }
    return lse - logits[label];
}

}  // namespace qaibp::train
