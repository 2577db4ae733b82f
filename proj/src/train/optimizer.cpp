// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/train/optimizer.hpp"

#include <cmath>

#include "qaibp/error.hpp"

namespace qaibp::train {

AdamW::AdamW(const ShadowNetwork& net, AdamConfig config)
    : config_(config), m_(ParamGrads::like(net)), v_(ParamGrads::like(net)) {}

namespace {

bool same_shape(const ParamGrads& a, const ShadowNetwork& net) {
    if (a.weights.size() != net.layers.size() || a.bias.size() != net.layers.size()) return false;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (a.weights[l].size() != net.layers[l].weights.size() || a.bias[l].size() != net.layers[l].bias.size()) {
            return false;
        }
    }
    return true;
}

void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
            const AdamConfig& c, double step_size, double bias2, double decay) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1 - c.beta1) * g[i];
        v[i] = c.beta2 * v[i] + (1 - c.beta2) * g[i] * g[i];
        p[i] -= decay * p[i];
        p[i] -= step_size * m[i] / (std::sqrt(v[i] / bias2) + c.epsilon);
    }
}

}  // namespace

void AdamW::step(ShadowNetwork& net, const ParamGrads& grads, double learning_rate, double weight_decay) {
    if (!same_shape(m_, net) || !same_shape(grads, net)) {
        fail(ErrorCode::ShapeError, "optimizer state does not match the network");
    }
    ++steps_;
    const double bias1 = 1 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bias2 = 1 - std::pow(config_.beta2, static_cast<double>(steps_));
    const double step_size = learning_rate / bias1;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        update(net.layers[l].weights, grads.weights[l], m_.weights[l], v_.weights[l], config_, step_size, bias2,
               learning_rate * weight_decay);
        update(net.layers[l].bias, grads.bias[l], m_.bias[l], v_.bias[l], config_, step_size, bias2, 0.0);
    }
}

void AdamW::restore(const ShadowNetwork& net, std::int64_t steps, ParamGrads m, ParamGrads v) {
    if (!same_shape(m, net) || !same_shape(v, net) || steps < 0) {
        fail(ErrorCode::ShapeError, "optimizer state does not match the network");
    }
    steps_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace qaibp::train
