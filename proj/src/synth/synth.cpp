// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/synth/synth.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "qaibp/error.hpp"
#include "qaibp/ibp.hpp"

namespace qaibp::synth {

OracleResult brute_force_verify(const QNetwork& net, const QTensor& x, std::int64_t eps, std::uint64_t budget) {
    const verify::RawBox box = verify::input_box(net, x, eps);
    const std::uint64_t count = verify::box_points(box);
    if (count > budget) {
        fail(ErrorCode::BudgetExceeded, "ball has " + std::to_string(count) + " points, budget is " +
                                            std::to_string(budget));
    }
    const std::size_t label = classify(net, x);
    OracleResult out;
    std::vector<std::int64_t> p = box.lo;
    const std::size_t n = p.size();
    for (;;) {
        ++out.points_checked;
        if (classify_raw(net, p) != label) {
            out.verdict = verify::Verdict::Vulnerable;
            out.witness = QTensor(x.shape(), x.format(), p);
            return out;
        }
        // Odometer with the last dimension fastest gives lexicographic order.
        std::size_t d = n;
        while (d > 0) {
            --d;
            if (p[d] < box.hi[d]) {
                ++p[d];
                break;
            }
            p[d] = box.lo[d];
            if (d == 0) return out;
        }
        if (n == 0) return out;  // zero-dimensional input has one point
    }
}

void PointDataset1D::validate() const {
    if (bits < 1 || bits > 24) fail(ErrorCode::InvalidValue, "bit width must be in [1, 24]");
    const QFormat f = input_format();
    std::vector<std::int64_t> xs;
    for (const auto& p : points) {
        if (p.x < f.raw_min() || p.x > f.raw_max()) {
            fail(ErrorCode::InvalidValue, "point " + std::to_string(p.x) + " outside the " + std::to_string(bits) +
                                              "-bit range");
        }
        if (p.label >= class_count) {
            fail(ErrorCode::InvalidLabel, "label " + std::to_string(p.label) + " out of range for " +
                                              std::to_string(class_count) + " classes");
        }
        xs.push_back(p.x);
    }
    std::sort(xs.begin(), xs.end());
    if (std::adjacent_find(xs.begin(), xs.end()) != xs.end()) fail(ErrorCode::InvalidValue, "duplicate points");
}

std::int64_t strict_radius(std::int64_t eps) {
    if (eps < 0) fail(ErrorCode::InvalidValue, "epsilon must be nonnegative");
    return std::max<std::int64_t>(eps - 1, 0);
}

PointDataset1D expand_dataset(const PointDataset1D& dataset, std::int64_t eps) {
    dataset.validate();
    const std::int64_t r = strict_radius(eps);
    const QFormat f = dataset.input_format();
    std::map<std::int64_t, std::size_t> labels;
    for (const auto& p : dataset.points) {
        for (std::int64_t z = std::max(p.x - r, f.raw_min()); z <= std::min(p.x + r, f.raw_max()); ++z) {
            const auto [it, inserted] = labels.emplace(z, p.label);
            if (!inserted && it->second != p.label) {
                fail(ErrorCode::GapViolation, "balls around differently labelled points meet at " + std::to_string(z));
            }
        }
    }
    PointDataset1D out;
    out.bits = dataset.bits;
    out.class_count = dataset.class_count;
    for (const auto& [z, y] : labels) out.points.push_back({z, y});
    return out;
}

IndicatorGadget indicator_gadget(std::int64_t target) {
    IndicatorGadget g;
    g.biases = {1 - target, -target, target + 1, target};
    return g;
}

std::int64_t gadget_value(const IndicatorGadget& g, std::int64_t z) {
    std::int64_t sum = g.output_bias;
    for (std::size_t i = 0; i < 4; ++i) {
        sum += g.output_weights[i] * std::max<std::int64_t>(0, g.input_weights[i] * z + g.biases[i]);
    }
    return sum;
}

QNetwork construct_robust_qnn(const PointDataset1D& dataset, std::int64_t eps) {
    const PointDataset1D expanded = expand_dataset(dataset, eps);
    if (expanded.points.empty()) fail(ErrorCode::InvalidValue, "dataset is empty");
    const int k = dataset.bits;
    const std::size_t m = dataset.class_count;
    const std::size_t hidden = 4 * expanded.points.size();
    const QFormat in = dataset.input_format();
    const QFormat unit_weight = QFormat::signed_bits(2);
    const QFormat hidden_bias = QFormat::signed_bits(k + 2);
    const QFormat hidden_out = QFormat::unsigned_bits(k + 1);

    std::vector<std::int64_t> w1(hidden), b1(hidden), w2(m * hidden, 0), b2(m, 0);
    for (std::size_t g = 0; g < expanded.points.size(); ++g) {
        const auto& p = expanded.points[g];
        const IndicatorGadget gadget = indicator_gadget(p.x);
        for (std::size_t u = 0; u < 4; ++u) {
            w1[4 * g + u] = gadget.input_weights[u];
            b1[4 * g + u] = gadget.biases[u];
            w2[p.label * hidden + 4 * g + u] = gadget.output_weights[u];
        }
        b2[p.label] += gadget.output_bias;
    }
    const std::int64_t lowest = *std::min_element(b2.begin(), b2.end());
    int bias_bits = 2;
    while (-lowest > (std::int64_t{1} << (bias_bits - 1))) ++bias_bits;

    std::vector<Layer> layers;
    layers.push_back(Layer::dense(QTensor({hidden, 1}, unit_weight, std::move(w1)),
                                  QTensor({hidden}, hidden_bias, std::move(b1)), in, 0, k + 1, Activation::relu_n(),
                                  hidden_out));
    layers.push_back(Layer::dense(QTensor({m, hidden}, unit_weight, std::move(w2)),
                                  QTensor({m}, QFormat::signed_bits(bias_bits), std::move(b2)), hidden_out, 0, 0,
                                  Activation::identity(), QFormat::signed_bits(32)));
    return QNetwork({1}, in, std::move(layers), m);
}

std::size_t hidden_units(const QNetwork& net) {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < net.layers().size(); ++i) {
        if (!net.layers()[i].is_flatten()) n += net.layers()[i].output_size();
    }
    return n;
}

}  // namespace qaibp::synth
