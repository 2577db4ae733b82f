// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/network.hpp"

#include <algorithm>
#include <cassert>
#include <cstdlib>
#include <string>

#include "qaibp/error.hpp"

namespace qaibp {

namespace {

std::int64_t magnitude(const QFormat& f) { return std::max(-f.raw_min(), f.raw_max()); }

std::int64_t max_abs(std::span<const std::int64_t> v) {
    std::int64_t m = 0;
    for (auto x : v) m = std::max(m, x < 0 ? -x : x);
    return m;
}

}  // namespace

Activation Activation::lookup(std::vector<std::int64_t> table) {
    if (table.empty()) {
        fail(ErrorCode::FormatError, "lookup activation needs a nonempty table");
    }
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (table[i] < table[i - 1]) {
            fail(ErrorCode::FormatError, "lookup activation is not monotone at index " + std::to_string(i));
        }
    }
    return Activation(ActivationKind::Lookup, std::move(table));
}

ConvGeometry ConvGeometry::make(const Shape& input_chw, std::size_t filters, std::size_t kernel, std::size_t stride,
                                Padding padding) {
    if (input_chw.size() != 3) {
        fail(ErrorCode::ShapeError, "conv2d expects a CxHxW input, got " + shape_to_string(input_chw));
    }
    if (filters == 0 || kernel == 0 || stride == 0) {
        fail(ErrorCode::ShapeError, "conv2d needs positive filters, kernel and stride");
    }
    ConvGeometry g;
    g.channels = input_chw[0];
    g.height = input_chw[1];
    g.width = input_chw[2];
    g.filters = filters;
    g.kernel = kernel;
    g.stride = stride;
    g.padding = padding;
    if (padding == Padding::Same) {
        g.out_height = (g.height + stride - 1) / stride;
        g.out_width = (g.width + stride - 1) / stride;
        const auto total = [&](std::size_t out, std::size_t in) -> std::size_t {
            const std::size_t need = (out - 1) * stride + kernel;
            return need > in ? need - in : 0;
        };
        g.pad_top = total(g.out_height, g.height) / 2;
        g.pad_left = total(g.out_width, g.width) / 2;
    } else {
        if (g.height < kernel || g.width < kernel) {
            fail(ErrorCode::ShapeError, "valid conv2d kernel larger than input " + shape_to_string(input_chw));
        }
        g.out_height = (g.height - kernel) / stride + 1;
        g.out_width = (g.width - kernel) / stride + 1;
    }
    return g;
}

Layer Layer::dense(QTensor weights, QTensor bias, QFormat input_format, int rescale_shift, int clamp_bits,
                   Activation activation, QFormat output_format) {
    if (weights.shape().size() != 2) {
        fail(ErrorCode::ShapeError, "dense weights must be [out x in], got " + shape_to_string(weights.shape()));
    }
    Layer layer;
    layer.input_shape_ = {weights.shape()[1]};
    layer.output_shape_ = {weights.shape()[0]};
    if (bias.shape() != layer.output_shape_) {
        fail(ErrorCode::ShapeError, "dense bias shape " + shape_to_string(bias.shape()) + " does not match " +
                                        shape_to_string(layer.output_shape_));
    }
    layer.params_ = DenseParams{std::move(weights), std::move(bias)};
    layer.input_format_ = input_format;
    layer.output_format_ = output_format;
    layer.rescale_shift_ = rescale_shift;
    layer.clamp_bits_ = clamp_bits;
    layer.activation_ = std::move(activation);
    layer.validate_parametric();
    return layer;
}

Layer Layer::conv2d(QTensor kernel, QTensor bias, const Shape& input_chw, std::size_t stride, Padding padding,
                    QFormat input_format, int rescale_shift, int clamp_bits, Activation activation,
                    QFormat output_format) {
    const auto& ks = kernel.shape();
    if (ks.size() != 4 || ks[2] != ks[3]) {
        fail(ErrorCode::ShapeError, "conv2d kernel must be [F x C x K x K], got " + shape_to_string(ks));
    }
    const auto geometry = ConvGeometry::make(input_chw, ks[0], ks[2], stride, padding);
    if (ks[1] != geometry.channels) {
        fail(ErrorCode::ShapeError, "conv2d kernel channels " + std::to_string(ks[1]) + " != input channels " +
                                        std::to_string(geometry.channels));
    }
    if (bias.shape() != Shape{ks[0]}) {
        fail(ErrorCode::ShapeError, "conv2d bias must have one entry per filter");
    }
    Layer layer;
    layer.input_shape_ = geometry.input_shape();
    layer.output_shape_ = geometry.output_shape();
    layer.params_ = Conv2DParams{std::move(kernel), std::move(bias), geometry};
    layer.input_format_ = input_format;
    layer.output_format_ = output_format;
    layer.rescale_shift_ = rescale_shift;
    layer.clamp_bits_ = clamp_bits;
    layer.activation_ = std::move(activation);
    layer.validate_parametric();
    return layer;
}

Layer Layer::flatten(Shape input_shape, QFormat format) {
    Layer layer;
    layer.output_shape_ = {shape_size(input_shape)};
    layer.input_shape_ = std::move(input_shape);
    layer.params_ = FlattenParams{};
    layer.input_format_ = format;
    layer.output_format_ = format;
    return layer;
}

void Layer::validate_parametric() {
    const QTensor& w = weights();
    const QTensor& b = bias();
    if (!w.format().is_signed() || !b.format().is_signed()) {
        fail(ErrorCode::FormatError, "weights and biases must use signed formats");
    }
    if (rescale_shift_ < 0 || rescale_shift_ > 62) {
        fail(ErrorCode::FormatError, "rescale shift must be in [0, 62], got " + std::to_string(rescale_shift_));
    }
    bias_shift_ = w.format().frac_bits() + input_format_.frac_bits() - b.format().frac_bits();
    if (bias_shift_ < 0) {
        fail(ErrorCode::FormatError, "bias has more fractional bits (" + std::to_string(b.format().frac_bits()) +
                                         ") than the accumulator (" +
                                         std::to_string(w.format().frac_bits() + input_format_.frac_bits()) + ")");
    }
    switch (activation_.kind()) {
    case ActivationKind::ReluN:
    case ActivationKind::Lookup:
        if (clamp_bits_ < 1 || clamp_bits_ > 32) {
            fail(ErrorCode::FormatError, "clamp bits must be in [1, 32], got " + std::to_string(clamp_bits_));
        }
        break;
    case ActivationKind::Identity:
        clamp_bits_ = 0;
        break;
    }
    if (activation_.kind() == ActivationKind::ReluN &&
        (!output_format_.contains(0) || !output_format_.contains(relu_n_max(clamp_bits_)))) {
        fail(ErrorCode::FormatError, "output format " + output_format_.to_string() + " cannot hold ReLU-N range [0, " +
                                         std::to_string(relu_n_max(clamp_bits_)) + "]");
    }
    if (activation_.kind() == ActivationKind::Lookup) {
        if (activation_.table().size() != static_cast<std::size_t>(relu_n_max(clamp_bits_)) + 1) {
            fail(ErrorCode::FormatError, "lookup table must have 2^N entries");
        }
        for (auto v : activation_.table()) {
            if (!output_format_.contains(v)) {
                fail(ErrorCode::FormatError, "lookup table entry outside output format");
            }
        }
    }
    const std::size_t fan_in = kind() == Kind::Dense ? input_shape_[0]
                                                     : geometry().channels * geometry().kernel * geometry().kernel;
    const std::int64_t max_bias = max_abs(b.raw());
    if (bias_shift_ > 62 || (max_bias != 0 && max_bias > (std::int64_t{1} << (62 - bias_shift_))) ||
        !WideAccumulator::fits(fan_in, std::max<std::int64_t>(max_abs(w.raw()), 1), magnitude(input_format_),
                               max_bias << bias_shift_)) {
        fail(ErrorCode::FormatError, "layer accumulator could overflow 64 bits");
    }
}

Layer::Kind Layer::kind() const noexcept {
    switch (params_.index()) {
    case 0: return Kind::Dense;
    case 1: return Kind::Conv2D;
    default: return Kind::Flatten;
    }
}

const QTensor& Layer::weights() const {
    if (const auto* d = std::get_if<DenseParams>(&params_)) return d->weights;
    if (const auto* c = std::get_if<Conv2DParams>(&params_)) return c->kernel;
    fail(ErrorCode::UnsupportedArchitecture, "flatten layer has no weights");
}

const QTensor& Layer::bias() const {
    if (const auto* d = std::get_if<DenseParams>(&params_)) return d->bias;
    if (const auto* c = std::get_if<Conv2DParams>(&params_)) return c->bias;
    fail(ErrorCode::UnsupportedArchitecture, "flatten layer has no bias");
}

const ConvGeometry& Layer::geometry() const {
    if (const auto* c = std::get_if<Conv2DParams>(&params_)) return c->geometry;
    fail(ErrorCode::UnsupportedArchitecture, "layer is not a convolution");
}

std::int64_t Layer::activate(std::int64_t acc) const {
    const std::int64_t scaled = rescale_floor(acc, rescale_shift_);
    switch (activation_.kind()) {
    case ActivationKind::ReluN: return clamp_relu_n(scaled, clamp_bits_);
    case ActivationKind::Identity: return saturate(scaled, output_format_);
    case ActivationKind::Lookup: return activation_.table()[static_cast<std::size_t>(clamp_relu_n(scaled, clamp_bits_))];
    }
    return scaled;
}

namespace {

template <class Visit>
void for_each_conv_tap(const ConvGeometry& g, std::size_t f, std::size_t oy, std::size_t ox, Visit&& visit) {
    const std::size_t k = g.kernel;
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                visit(((f * g.channels + c) * k + ky) * k + kx,
                      (c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix));
            }
        }
    }
}

}  // namespace

void Layer::accumulate(std::span<const std::int64_t> x, std::span<std::int64_t> acc) const {
    if (const auto* d = std::get_if<DenseParams>(&params_)) {
        const auto w = d->weights.raw();
        const std::size_t in = input_shape_[0];
        for (std::size_t i = 0; i < acc.size(); ++i) {
            WideAccumulator a(d->bias[i] << bias_shift_);
            const auto* row = w.data() + i * in;
            for (std::size_t j = 0; j < in; ++j) a.add_product(row[j], x[j]);
            acc[i] = a.raw();
        }
        return;
    }
    const auto& c = std::get<Conv2DParams>(params_);
    const auto& g = c.geometry;
    const auto k = c.kernel.raw();
    for (std::size_t f = 0; f < g.filters; ++f) {
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                WideAccumulator a(c.bias[f] << bias_shift_);
                for_each_conv_tap(g, f, oy, ox, [&](std::size_t wi, std::size_t xi) { a.add_product(k[wi], x[xi]); });
                acc[(f * g.out_height + oy) * g.out_width + ox] = a.raw();
            }
        }
    }
}

void Layer::accumulate_bounds(std::span<const std::int64_t> lo, std::span<const std::int64_t> hi,
                              std::span<std::int64_t> acc_lo, std::span<std::int64_t> acc_hi) const {
    const auto tap = [&](std::int64_t w, std::size_t xi, WideAccumulator& l, WideAccumulator& h) {
        if (w >= 0) {
            l.add_product(w, lo[xi]);
            h.add_product(w, hi[xi]);
        } else {
            l.add_product(w, hi[xi]);
            h.add_product(w, lo[xi]);
        }
    };
    if (const auto* d = std::get_if<DenseParams>(&params_)) {
        const auto w = d->weights.raw();
        const std::size_t in = input_shape_[0];
        for (std::size_t i = 0; i < acc_lo.size(); ++i) {
            const std::int64_t b = d->bias[i] << bias_shift_;
            WideAccumulator l(b), h(b);
            const auto* row = w.data() + i * in;
            for (std::size_t j = 0; j < in; ++j) tap(row[j], j, l, h);
            acc_lo[i] = l.raw();
            acc_hi[i] = h.raw();
        }
        return;
    }
    const auto& c = std::get<Conv2DParams>(params_);
    const auto& g = c.geometry;
    const auto k = c.kernel.raw();
    for (std::size_t f = 0; f < g.filters; ++f) {
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const std::int64_t b = c.bias[f] << bias_shift_;
                WideAccumulator l(b), h(b);
                for_each_conv_tap(g, f, oy, ox, [&](std::size_t wi, std::size_t xi) { tap(k[wi], xi, l, h); });
                const std::size_t o = (f * g.out_height + oy) * g.out_width + ox;
                acc_lo[o] = l.raw();
                acc_hi[o] = h.raw();
            }
        }
    }
}

void Layer::forward_raw(std::span<const std::int64_t> x, std::vector<std::int64_t>& out) const {
    if (is_flatten()) {
        out.assign(x.begin(), x.end());
        return;
    }
    out.resize(output_size());
    accumulate(x, out);
    for (auto& v : out) {
        v = activate(v);
        assert(output_format_.contains(v));
    }
}

QNetwork::QNetwork(Shape input_shape, QFormat input_format, std::vector<Layer> layers, std::size_t class_count)
    : input_shape_(std::move(input_shape)),
      input_format_(input_format),
      layers_(std::move(layers)),
      class_count_(class_count) {
    Shape shape = input_shape_;
    QFormat format = input_format_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& l = layers_[i];
        if (l.input_shape() != shape) {
            fail(ErrorCode::ShapeError, "layer " + std::to_string(i) + " expects input " +
                                            shape_to_string(l.input_shape()) + " but receives " + shape_to_string(shape));
        }
        if (l.input_format() != format) {
            fail(ErrorCode::ShapeError, "layer " + std::to_string(i) + " expects input format " +
                                            l.input_format().to_string() + " but receives " + format.to_string());
        }
        shape = l.output_shape();
        format = l.output_format();
    }
    if (class_count_ == 0 || shape_size(shape) != class_count_) {
        fail(ErrorCode::ShapeError, "network output " + shape_to_string(shape) + " does not match class count " +
                                        std::to_string(class_count_));
    }
    if (!layers_.empty() && !layers_.back().is_flatten() &&
        layers_.back().activation().kind() != ActivationKind::Identity) {
        fail(ErrorCode::UnsupportedArchitecture, "final layer must use the identity activation (raw logits)");
    }
}

void check_input(const QNetwork& net, const QTensor& x) {
    if (x.shape() != net.input_shape() || x.format() != net.input_format()) {
        fail(ErrorCode::ShapeError, "input " + shape_to_string(x.shape()) + " " + x.format().to_string() +
                                        " does not match network input " + shape_to_string(net.input_shape()) + " " +
                                        net.input_format().to_string());
    }
}

QTensor layer_forward(const Layer& layer, const QTensor& input) {
    if (input.shape() != layer.input_shape() || input.format() != layer.input_format()) {
        fail(ErrorCode::ShapeError, "layer input mismatch: got " + shape_to_string(input.shape()) + " " +
                                        input.format().to_string());
    }
    std::vector<std::int64_t> out;
    layer.forward_raw(input.raw(), out);
    return QTensor(layer.output_shape(), layer.output_format(), std::move(out));
}

QTensor forward(const QNetwork& net, const QTensor& x) {
    check_input(net, x);
    QTensor value = x;
    for (const auto& layer : net.layers()) value = layer_forward(layer, value);
    return value;
}

std::vector<std::int64_t> forward_raw(const QNetwork& net, std::span<const std::int64_t> x) {
    std::vector<std::int64_t> a(x.begin(), x.end());
    std::vector<std::int64_t> b;
    for (const auto& layer : net.layers()) {
        layer.forward_raw(a, b);
        std::swap(a, b);
    }
    return a;
}

std::size_t argmax_smallest(std::span<const std::int64_t> logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return best;
}

std::size_t classify(const QNetwork& net, const QTensor& x) {
    check_input(net, x);
    return classify_raw(net, x.raw());
}

std::size_t classify_raw(const QNetwork& net, std::span<const std::int64_t> x) {
    const auto logits = forward_raw(net, x);
    return argmax_smallest(logits);
}

}  // namespace qaibp
