// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

// Central finite differences of the robust training loss, used as the oracle
// for the hand-written reverse pass. Only the forward pass is shared.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qaibp/train/autodiff.hpp"
#include "qaibp/train/loss.hpp"
#include "qaibp/train/shadow.hpp"
#include "qaibp/train/trainer.hpp"

namespace qaibp::test {

inline double robust_loss_value(const train::ShadowNetwork& net, const std::vector<train::TrainSample>& data,
                                double eps, bool elide) {
    const train::PreparedNetwork p(net, train::Semantics::Smooth);
    const int frac = net.input_format.frac_bits();
    const double e = std::ldexp(eps, -frac);
    const double vmax = std::ldexp(static_cast<double>(net.input_format.raw_max()), -frac);
    double loss = 0.0;
    for (const auto& s : data) {
        std::vector<double> lo(s.input.size()), hi(s.input.size());
        for (std::size_t i = 0; i < lo.size(); ++i) {
            lo[i] = std::max(s.input[i] - e, 0.0);
            hi[i] = std::min(s.input[i] + e, vmax);
        }
        loss += train::margin_loss(train::forward_interval(p, lo, hi, s.label, elide).margins);
    }
    return loss / static_cast<double>(data.size());
}

struct GradCheck {
    double relative_error = 0.0;
    double gradient_norm = 0.0;
    double loss = 0.0;
};

inline GradCheck check_robust_gradient(const train::ShadowNetwork& net, const std::vector<train::TrainSample>& data,
                                       double eps, bool elide, double h = 1e-6) {
    std::vector<const train::TrainSample*> batch;
    for (const auto& s : data) batch.push_back(&s);
    train::ParamGrads g;
    GradCheck out;
    out.loss = train::robust_loss_gradient(net, batch, eps, elide, train::Semantics::Smooth, g);
    double diff2 = 0.0, g2 = 0.0, fd2 = 0.0;
    train::ShadowNetwork probe = net;
    const auto visit = [&](std::vector<double>& params, const std::vector<double>& grads) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double keep = params[i];
            params[i] = keep + h;
            const double up = robust_loss_value(probe, data, eps, elide);
            params[i] = keep - h;
            const double down = robust_loss_value(probe, data, eps, elide);
            params[i] = keep;
            const double fd = (up - down) / (2 * h);
            diff2 += (fd - grads[i]) * (fd - grads[i]);
            g2 += grads[i] * grads[i];
            fd2 += fd * fd;
        }
    };
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        visit(probe.layers[l].weights, g.weights[l]);
        visit(probe.layers[l].bias, g.bias[l]);
    }
    const double denom = std::max(std::sqrt(g2), std::sqrt(fd2));
    out.gradient_norm = std::sqrt(g2);
    out.relative_error = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
    return out;
}

/// Small random shadow (dense or conv) with parameters kept away from the
/// clip limits, plus a batch of random inputs on the input grid.
inline train::ShadowNetwork random_shadow(std::mt19937_64& rng, bool conv) {
    train::ArchitectureSpec spec;
    spec.class_count = 3;
    spec.input_format = QFormat::unsigned_bits(8, 8);
    spec.formats = train::preset_formats("mnist-formats");
    using K = train::LayerSpec::Kind;
    if (conv) {
        spec.input_shape = {1, 5, 5};
        spec.hidden = {{K::Conv, 2, 3, 2, Padding::Same}, {K::Flatten}, {K::Dense, 4}};
    } else {
        spec.input_shape = {4};
        spec.hidden = {{K::Dense, 5}, {K::Dense, 4}};
    }
    train::ShadowNetwork net = train::build_shadow(spec, rng());
    std::uniform_real_distribution<double> w(-1.5, 1.5), b(-0.5, 0.5);
    for (auto& l : net.layers) {
        for (auto& v : l.weights) v = w(rng);
        for (auto& v : l.bias) v = b(rng);
    }
    return net;
}

inline std::vector<train::TrainSample> random_samples(std::mt19937_64& rng, const train::ShadowNetwork& net,
                                                      std::size_t n) {
    std::vector<train::TrainSample> out(n);
    std::uniform_int_distribution<int> px(0, 255);
    std::uniform_int_distribution<std::size_t> lab(0, net.class_count - 1);
    for (auto& s : out) {
        s.input.resize(net.input_size());
        for (auto& v : s.input) v = px(rng) / 256.0;
        s.label = lab(rng);
    }
    return out;
}

}  // namespace qaibp::test
