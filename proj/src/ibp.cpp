// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/ibp.hpp"

#include <algorithm>
#include <string>

#include "qaibp/error.hpp"

namespace qaibp::ibp {

IntervalTensor::IntervalTensor(QTensor lower, QTensor upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.shape() != upper_.shape() || lower_.format() != upper_.format()) {
        fail(ErrorCode::ShapeError, "interval bounds differ in shape or format");
    }
    for (std::size_t i = 0; i < lower_.size(); ++i) {
        if (lower_[i] > upper_[i]) {
            fail(ErrorCode::InvalidValue, "interval lower bound exceeds upper bound at element " + std::to_string(i));
        }
    }
}

bool IntervalTensor::is_point() const { return lower_ == upper_; }

bool IntervalTensor::contains(const IntervalTensor& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        if (other.lower_[i] < lower_[i] || other.upper_[i] > upper_[i]) return false;
    }
    return true;
}

bool IntervalTensor::contains(std::span<const std::int64_t> x) const {
    if (x.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        if (x[i] < lower_[i] || x[i] > upper_[i]) return false;
    }
    return true;
}

CenterRadius CenterRadius::from_bounds(std::span<const std::int64_t> lo, std::span<const std::int64_t> hi) {
    CenterRadius cr;
    cr.center2.resize(lo.size());
    cr.radius2.resize(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        cr.center2[i] = hi[i] + lo[i];
        cr.radius2[i] = hi[i] - lo[i];
    }
    return cr;
}

CenterRadius accumulate_center_radius(const Layer& layer, const CenterRadius& input) {
    if (layer.is_flatten()) {
        fail(ErrorCode::UnsupportedArchitecture, "center/radius accumulation needs a parametric layer");
    }
    // mu2 = W c2 + 2b is linear, so route it through the exact accumulator
    // with the bias counted twice: accumulate(c2) adds b once.
    const std::size_t out = layer.output_size();
    CenterRadius acc;
    acc.center2.resize(out);
    acc.radius2.resize(out);
    layer.accumulate(input.center2, acc.center2);
    std::vector<std::int64_t> zeros(input.center2.size(), 0);
    std::vector<std::int64_t> bias_only(out);
    layer.accumulate(zeros, bias_only);
    for (std::size_t i = 0; i < out; ++i) acc.center2[i] += bias_only[i];

    // r2 = |W| radius2 through a copy of the layer with absolute weights and
    // zero bias, using the plain linear path rather than the sign split.
    const QTensor& w = layer.weights();
    const QFormat wide = QFormat::signed_bits(std::min(w.format().total_bits() + 1, 32), w.format().frac_bits());
    std::vector<std::int64_t> abs_w(w.raw().begin(), w.raw().end());
    for (auto& v : abs_w) v = v < 0 ? -v : v;
    QTensor abs_weights(w.shape(), wide, std::move(abs_w));
    QTensor zero_bias(layer.bias().shape(), layer.bias().format());
    const QFormat wide_in = QFormat::signed_bits(32, layer.input_format().frac_bits());
    const Layer abs_layer =
        layer.kind() == Layer::Kind::Dense
            ? Layer::dense(std::move(abs_weights), std::move(zero_bias), wide_in, 0, 0, Activation::identity(),
                           QFormat::signed_bits(32))
            : Layer::conv2d(std::move(abs_weights), std::move(zero_bias), layer.input_shape(),
                            layer.geometry().stride, layer.geometry().padding, wide_in, 0, 0, Activation::identity(),
                            QFormat::signed_bits(32));
    abs_layer.accumulate(input.radius2, acc.radius2);
    return acc;
}

IntervalTensor input_region(const QTensor& x, std::int64_t eps) {
    if (eps < 0) {
        fail(ErrorCode::InvalidValue, "epsilon must be nonnegative");
    }
    std::vector<std::int64_t> lo(x.size()), hi(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        lo[i] = saturate(x[i] - eps, x.format());
        hi[i] = saturate(x[i] + eps, x.format());
    }
    return IntervalTensor(QTensor(x.shape(), x.format(), std::move(lo)), QTensor(x.shape(), x.format(), std::move(hi)));
}

namespace {

void layer_propagate_raw(const Layer& layer, const RawBox& in, RawBox& out) {
    if (layer.is_flatten()) {
        out = in;
        return;
    }
    const std::size_t n = layer.output_size();
    out.lo.resize(n);
    out.hi.resize(n);
    layer.accumulate_bounds(in.lo, in.hi, out.lo, out.hi);
    for (std::size_t i = 0; i < n; ++i) {
        out.lo[i] = layer.activate(out.lo[i]);
        out.hi[i] = layer.activate(out.hi[i]);
    }
}

}  // namespace

IntervalTensor layer_propagate(const Layer& layer, const IntervalTensor& region) {
    if (region.shape() != layer.input_shape() || region.format() != layer.input_format()) {
        fail(ErrorCode::ShapeError, "region " + shape_to_string(region.shape()) + " " + region.format().to_string() +
                                        " does not match layer input");
    }
    RawBox in{{region.lower().raw().begin(), region.lower().raw().end()},
              {region.upper().raw().begin(), region.upper().raw().end()}};
    RawBox out;
    layer_propagate_raw(layer, in, out);
    return IntervalTensor(QTensor(layer.output_shape(), layer.output_format(), std::move(out.lo)),
                          QTensor(layer.output_shape(), layer.output_format(), std::move(out.hi)));
}

void propagate_raw(const QNetwork& net, RawBox& box, RawBox* penultimate) {
    RawBox next;
    const auto& layers = net.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (penultimate && i + 1 == layers.size()) *penultimate = box;
        layer_propagate_raw(layers[i], box, next);
        std::swap(box, next);
    }
}

IntervalTensor propagate(const QNetwork& net, const IntervalTensor& region) {
    if (region.shape() != net.input_shape() || region.format() != net.input_format()) {
        fail(ErrorCode::ShapeError, "region does not match network input " + shape_to_string(net.input_shape()));
    }
    RawBox box{{region.lower().raw().begin(), region.lower().raw().end()},
               {region.upper().raw().begin(), region.upper().raw().end()}};
    propagate_raw(net, box);
    const Shape shape = net.layers().empty() ? net.input_shape() : net.layers().back().output_shape();
    return IntervalTensor(QTensor(shape, net.output_format(), std::move(box.lo)),
                          QTensor(shape, net.output_format(), std::move(box.hi)));
}

Certification check_robust(const IntervalTensor& logits, std::size_t label) {
    if (label >= logits.size()) {
        fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range for " +
                                          std::to_string(logits.size()) + " classes");
    }
    const std::int64_t floor_label = logits.lower()[label];
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (j != label && !(floor_label > logits.upper()[j])) return Certification::Unknown;
    }
    return Certification::Certified;
}

std::vector<std::int64_t> margin_lower_bounds_raw(const Layer& last, const RawBox& penultimate, const RawBox& logits,
                                                  std::size_t label) {
    if (last.kind() != Layer::Kind::Dense || last.activation().kind() != ActivationKind::Identity) {
        fail(ErrorCode::UnsupportedArchitecture, "last-layer elision needs a final dense identity layer");
    }
    const std::size_t m = last.output_size();
    if (label >= m) {
        fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range for " + std::to_string(m) +
                                          " classes");
    }
    const QTensor& w = last.weights();
    const QTensor& b = last.bias();
    const std::size_t in = last.input_size();
    const QFormat& out = last.output_format();
    // Saturation of a logit breaks the difference identity; it can only
    // happen if the box touches the ends of the output range.
    const auto unsaturated = [&](std::size_t c) {
        return logits.lo[c] > out.raw_min() && logits.hi[c] < out.raw_max();
    };
    std::vector<std::int64_t> margins;
    margins.reserve(m - 1);
    for (std::size_t j = 0; j < m; ++j) {
        if (j == label) continue;
        const std::int64_t independent = logits.lo[label] - logits.hi[j];
        if (!unsaturated(label) || !unsaturated(j)) {
            margins.push_back(independent);
            continue;
        }
        WideAccumulator acc((b[label] - b[j]) << last.bias_shift());
        for (std::size_t i = 0; i < in; ++i) {
            const std::int64_t d = w[label * in + i] - w[j * in + i];
            acc.add_product(d, d >= 0 ? penultimate.lo[i] : penultimate.hi[i]);
        }
        // floor(a/2^s) - floor(c/2^s) >= floor((a - c)/2^s) for integers.
        margins.push_back(std::max(rescale_floor(acc.raw(), last.rescale_shift()), independent));
    }
    return margins;
}

std::vector<std::int64_t> margin_lower_bounds(const QNetwork& net, const IntervalTensor& region, std::size_t label) {
    if (net.layers().empty()) {
        fail(ErrorCode::UnsupportedArchitecture, "last-layer elision needs a final dense layer");
    }
    if (region.shape() != net.input_shape() || region.format() != net.input_format()) {
        fail(ErrorCode::ShapeError, "region does not match network input " + shape_to_string(net.input_shape()));
    }
    const Layer& last = net.layers().back();
    if (last.kind() != Layer::Kind::Dense) {
        fail(ErrorCode::UnsupportedArchitecture, "last-layer elision needs a final dense layer");
    }
    RawBox box{{region.lower().raw().begin(), region.lower().raw().end()},
               {region.upper().raw().begin(), region.upper().raw().end()}};
    RawBox penultimate;
    propagate_raw(net, box, &penultimate);
    return margin_lower_bounds_raw(last, penultimate, box, label);
}

Certification check_margins(std::span<const std::int64_t> margins) {
    for (auto m : margins) {
        if (m <= 0) return Certification::Unknown;
    }
    return Certification::Certified;
}

}  // namespace qaibp::ibp
