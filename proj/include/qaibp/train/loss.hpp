// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

namespace qaibp::train {

/// sum_{j != label} max(0, upper[j] - lower[label]), the hinge on the
/// independent logit bounds. Writes d loss / d bounds when the spans are
/// nonempty.
double qaibp_loss(std::span<const double> lower, std::span<const double> upper, std::size_t label,
                  std::span<double> dlower = {}, std::span<double> dupper = {});

/// sum_j max(0, -m_j) over margin lower bounds. With m_j = lower[label] -
/// upper[j] this equals qaibp_loss; tighter (elided) margins give a smaller
/// value. Subgradient -1 is used where m_j <= 0.
double margin_loss(std::span<const double> margins, std::span<double> dmargins = {});

/// Softmax cross-entropy with log-sum-exp stabilisation.
double cross_entropy(std::span<const double> logits, std::size_t label, std::span<double> dlogits = {});

}  // namespace qaibp::train
