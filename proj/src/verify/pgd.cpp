// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "qaibp/error.hpp"
#include "qaibp/train/autodiff.hpp"
#include "qaibp/train/shadow.hpp"
#include "qaibp/verify/verify.hpp"

namespace qaibp::verify {

Attacker::Attacker(const QNetwork& net) : net_(&net) {
    try {
        shadow_ = std::make_unique<train::ShadowNetwork>(train::shadow_from_qnetwork(net));
        prepared_ = std::make_unique<train::PreparedNetwork>(*shadow_, train::Semantics::Quantized);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::UnsupportedArchitecture) throw;
        shadow_.reset();
        prepared_.reset();
    }
}

Attacker::~Attacker() = default;

std::vector<double> Attacker::gradient(std::span<const double> z, std::size_t label) const {
    const int frac = net_->input_format().frac_bits();
    std::vector<double> x(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) x[i] = std::ldexp(z[i], -frac);
    train::PointTape tape;
    const auto logits = train::forward_point(*prepared_, x, &tape);
    // Ascend on the best competing logit minus the label logit.
    std::size_t best = label == 0 ? 1 : 0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (j != label && logits[j] > logits[best]) best = j;
    }
    std::vector<double> dlogits(logits.size(), 0.0);
    dlogits[best] = 1.0;
    dlogits[label] = -1.0;
    train::ParamGrads grads = train::ParamGrads::like(*shadow_);
    std::vector<double> dx;
    train::backward_point(*prepared_, tape, dlogits, grads, &dx);
    return dx;
}

std::optional<std::vector<std::int64_t>> Attacker::attack(const RawBox& box, std::size_t label, const PgdConfig& cfg,
                                                          std::mt19937_64& rng) const {
    const std::size_t n = box.lo.size();
    if (net_->class_count() < 2) return std::nullopt;
    std::vector<std::int64_t> candidate(n);
    const auto misclassified = [&](std::span<const double> z) {
        for (std::size_t i = 0; i < n; ++i) {
            candidate[i] = std::clamp<std::int64_t>(std::llround(z[i]), box.lo[i], box.hi[i]);
        }
        return classify_raw(*net_, candidate) != label;
    };
    double half = 0.0;
    for (std::size_t i = 0; i < n; ++i) half = std::max(half, 0.5 * static_cast<double>(box.hi[i] - box.lo[i]));
    const double step = std::max(0.5, cfg.step_fraction * half);

    std::vector<double> z(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto random_point = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = static_cast<double>(box.lo[i]) + unit(rng) * static_cast<double>(box.hi[i] - box.lo[i]);
        }
    };
    for (int start = 0; start <= cfg.restarts; ++start) {
        if (start == 0) {
            for (std::size_t i = 0; i < n; ++i) z[i] = 0.5 * static_cast<double>(box.lo[i] + box.hi[i]);
        } else {
            random_point();
        }
        for (int s = 0; s < cfg.steps; ++s) {
            if (misclassified(z)) return candidate;
            if (!prepared_) {
                random_point();
                continue;
            }
            const auto g = gradient(z, label);
            const bool flat = std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; });
            for (std::size_t i = 0; i < n; ++i) {
                double dir = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
                if (flat) dir = unit(rng) < 0.5 ? -1.0 : 1.0;
                z[i] = std::clamp(z[i] + step * dir, static_cast<double>(box.lo[i]), static_cast<double>(box.hi[i]));
            }
        }
        if (misclassified(z)) return candidate;
    }
    return std::nullopt;
}

std::optional<QTensor> pgd_attack(const QNetwork& net, const ibp::IntervalTensor& region, std::size_t original_class,
                                  const PgdConfig& cfg, std::uint64_t seed) {
    if (region.shape() != net.input_shape() || region.format() != net.input_format()) {
        fail(ErrorCode::ShapeError, "region does not match network input " + shape_to_string(net.input_shape()));
    }
    const RawBox box{{region.lower().raw().begin(), region.lower().raw().end()},
                     {region.upper().raw().begin(), region.upper().raw().end()}};
    const Attacker attacker(net);
    std::mt19937_64 rng(seed);
    auto w = attacker.attack(box, original_class, cfg, rng);
    if (!w) return std::nullopt;
    return QTensor(net.input_shape(), net.input_format(), std::move(*w));
}

}  // namespace qaibp::verify
