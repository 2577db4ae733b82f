// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "qaibp/train/autodiff.hpp"
#include "qaibp/train/shadow.hpp"

namespace qaibp::train {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with decoupled weight decay. Decay applies to weights only, never to
/// biases.
class AdamW {
public:
    AdamW() = default;
    AdamW(const ShadowNetwork& net, AdamConfig config);

    void step(ShadowNetwork& net, const ParamGrads& grads, double learning_rate, double weight_decay);

    const AdamConfig& config() const noexcept { return config_; }
    std::int64_t steps() const noexcept { return steps_; }
    const ParamGrads& first_moment() const noexcept { return m_; }
    const ParamGrads& second_moment() const noexcept { return v_; }

    /// Restores a saved state; shapes must match the network.
    void restore(const ShadowNetwork& net, std::int64_t steps, ParamGrads m, ParamGrads v);

private:
    AdamConfig config_;
    std::int64_t steps_ = 0;
    ParamGrads m_, v_;
};

}  // namespace qaibp::train
