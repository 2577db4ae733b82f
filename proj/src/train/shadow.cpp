// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/train/shadow.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "qaibp/error.hpp"

namespace qaibp::train {

std::size_t ShadowLayer::fan_in() const noexcept {
    switch (kind) {
    case ShadowKind::Dense: return input_size();
    case ShadowKind::Conv2D: return geometry.channels * geometry.kernel * geometry.kernel;
    case ShadowKind::Flatten: return 0;
    }
    return 0;
}

std::size_t ShadowNetwork::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

std::vector<LayerSpec> preset_architecture(const std::string& name) {
    using K = LayerSpec::Kind;
    const auto conv = [](std::size_t f, std::size_t k, std::size_t s) {
        return LayerSpec{K::Conv, f, k, s, Padding::Same};
    };
    const auto dense = [](std::size_t u) { return LayerSpec{K::Dense, u, 0, 1, Padding::Same}; };
    const LayerSpec flatten{K::Flatten, 0, 0, 1, Padding::Same};
    if (name == "mnist-arch") {
        return {conv(64, 5, 2), conv(128, 3, 1), conv(256, 3, 1), conv(384, 3, 1), conv(512, 3, 2), flatten, dense(128)};
    }
    if (name == "fashion-arch" || name == "cifar-arch") {
        return {conv(64, 5, 2), conv(96, 3, 1), conv(128, 3, 2), flatten, dense(128)};
    }
    if (name == "small-conv") {
        return {conv(8, 5, 2), conv(16, 3, 2), flatten, dense(64)};
    }
    if (name == "mlp") {
        return {flatten, dense(64)};
    }
    fail(ErrorCode::ConfigError, "unknown architecture preset '" + name + "'");
}

FormatSpec preset_formats(const std::string& name) {
    FormatSpec f;
    f.weight = QFormat::parse("Q2.6", true);
    f.bias = QFormat::parse("Q5.3", true);
    if (name == "mnist-formats") {
        f.activation = QFormat::parse("Q3.5", false);
    } else if (name == "fashion-formats" || name == "cifar-formats") {
        f.activation = QFormat::parse("Q4.4", false);
    } else {
        fail(ErrorCode::ConfigError, "unknown format preset '" + name + "'");
    }
    return f;
}

namespace {

ShadowLayer parametric_layer(ShadowKind kind, Shape in_shape, Shape out_shape, const FormatSpec& formats,
                             int input_frac) {
    ShadowLayer l;
    l.kind = kind;
    l.input_shape = std::move(in_shape);
    l.output_shape = std::move(out_shape);
    l.weight_format = formats.weight;
    l.bias_format = formats.bias;
    l.input_frac = input_frac;
    l.bias_frac = formats.bias.frac_bits();
    return l;
}

void init_uniform(ShadowLayer& l, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(l.fan_in(), 1)));
    const double wmax = dequantize(l.weight_format.raw_max(), l.weight_format.frac_bits());
    std::uniform_real_distribution<double> dist(-std::min(limit, wmax), std::min(limit, wmax));
    for (auto& w : l.weights) w = dist(rng);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
}

}  // namespace

ShadowNetwork build_shadow(const ArchitectureSpec& spec, std::uint64_t seed) {
    if (spec.class_count < 1) fail(ErrorCode::ConfigError, "class_count must be positive");
    if (spec.formats.activation.is_signed() || !spec.formats.weight.is_signed() || !spec.formats.bias.is_signed()) {
        fail(ErrorCode::FormatError, "activations must be unsigned, weights and biases signed");
    }
    std::mt19937_64 rng(seed);
    ShadowNetwork net;
    net.input_shape = spec.input_shape;
    net.input_format = spec.input_format;
    net.class_count = spec.class_count;

    Shape shape = spec.input_shape;
    int frac = spec.input_format.frac_bits();
    const QFormat act = spec.formats.activation;
    for (const auto& ls : spec.hidden) {
        switch (ls.kind) {
        case LayerSpec::Kind::Flatten: {
            ShadowLayer l;
            l.kind = ShadowKind::Flatten;
            l.input_shape = shape;
            l.output_shape = {shape_size(shape)};
            l.input_frac = l.output_frac = frac;
            l.output_format = net.layers.empty() ? spec.input_format : net.layers.back().output_format;
            shape = l.output_shape;
            net.layers.push_back(std::move(l));
            break;
        }
        case LayerSpec::Kind::Conv: {
            if (shape.size() != 3) fail(ErrorCode::ShapeError, "convolution needs a CHW input, got " + shape_to_string(shape));
            const auto g = ConvGeometry::make(shape, ls.units, ls.kernel, ls.stride, ls.padding);
            ShadowLayer l = parametric_layer(ShadowKind::Conv2D, shape, g.output_shape(), spec.formats, frac);
            l.geometry = g;
            l.weights.resize(g.filters * g.channels * g.kernel * g.kernel);
            l.bias.resize(g.filters);
            net.layers.push_back(std::move(l));
            break;
        }
        case LayerSpec::Kind::Dense: {
            if (shape.size() != 1) fail(ErrorCode::ShapeError, "dense layer needs a flat input, got " + shape_to_string(shape));
            ShadowLayer l = parametric_layer(ShadowKind::Dense, shape, {ls.units}, spec.formats, frac);
            l.weights.resize(ls.units * shape[0]);
            l.bias.resize(ls.units);
            net.layers.push_back(std::move(l));
            break;
        }
        }
        ShadowLayer& l = net.layers.back();
        if (l.parametric()) {
            l.output_frac = act.frac_bits();
            l.output_format = act;
            l.clamp_bits = act.total_bits();
            l.activation = ActivationKind::ReluN;
            init_uniform(l, rng);
            shape = l.output_shape;
            frac = l.output_frac;
        }
    }
    if (shape.size() != 1) {
        fail(ErrorCode::ShapeError, "architecture must end with a flat tensor before the classifier, got " +
                                        shape_to_string(shape));
    }
    ShadowLayer head = parametric_layer(ShadowKind::Dense, shape, {spec.class_count}, spec.formats, frac);
    head.weights.resize(spec.class_count * shape[0]);
    head.bias.resize(spec.class_count);
    head.output_frac = act.frac_bits();
    head.output_format = QFormat::signed_bits(32, act.frac_bits());
    head.activation = ActivationKind::Identity;
    init_uniform(head, rng);
    net.layers.push_back(std::move(head));
    return net;
}

ShadowNetwork shadow_from_qnetwork(const QNetwork& net) {
    ShadowNetwork s;
    s.input_shape = net.input_shape();
    s.input_format = net.input_format();
    s.class_count = net.class_count();
    int frac = net.input_format().frac_bits();
    for (const Layer& layer : net.layers()) {
        ShadowLayer l;
        l.input_shape = layer.input_shape();
        l.output_shape = layer.output_shape();
        l.output_format = layer.output_format();
        l.input_frac = frac;
        if (layer.is_flatten()) {
            l.kind = ShadowKind::Flatten;
            l.output_frac = frac;
            s.layers.push_back(std::move(l));
            continue;
        }
        if (layer.activation().kind() == ActivationKind::Lookup) {
            fail(ErrorCode::UnsupportedArchitecture, "lookup activations have no float shadow");
        }
        l.kind = layer.kind() == Layer::Kind::Dense ? ShadowKind::Dense : ShadowKind::Conv2D;
        if (l.kind == ShadowKind::Conv2D) l.geometry = layer.geometry();
        l.weight_format = layer.weights().format();
        l.bias_format = layer.bias().format();
        const int wf = l.weight_format.frac_bits();
        l.output_frac = wf + frac - layer.rescale_shift();
        l.bias_frac = wf + frac - layer.bias_shift();
        l.clamp_bits = layer.clamp_bits();
        l.activation = layer.activation().kind();
        for (auto r : layer.weights().raw()) l.weights.push_back(dequantize(r, wf));
        for (auto r : layer.bias().raw()) l.bias.push_back(dequantize(r, l.bias_frac));
        frac = l.output_frac;
        s.layers.push_back(std::move(l));
    }
    return s;
}

namespace {

QTensor round_parameters(const std::vector<double>& values, const Shape& shape, QFormat format, int grid_frac,
                         std::size_t& saturated) {
    std::vector<std::int64_t> raw(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) fail(ErrorCode::NumericError, "non-finite parameter during export");
        const double scaled = std::round(std::ldexp(values[i], grid_frac));
        if (scaled < static_cast<double>(format.raw_min()) || scaled > static_cast<double>(format.raw_max())) {
            ++saturated;
        }
        raw[i] = saturate(static_cast<std::int64_t>(std::clamp(scaled, -9.0e15, 9.0e15)), format);
    }
    return QTensor(shape, format, std::move(raw));
}

}  // namespace

ExportResult export_quantized(const ShadowNetwork& shadow) {
    std::vector<Layer> layers;
    std::size_t saturated = 0;
    QFormat in_format = shadow.input_format;
    int frac = shadow.input_format.frac_bits();
    for (std::size_t i = 0; i < shadow.layers.size(); ++i) {
        const ShadowLayer& l = shadow.layers[i];
        if (l.input_frac != frac) {
            fail(ErrorCode::FormatError, "layer " + std::to_string(i) + " input grid does not match its predecessor");
        }
        if (!l.parametric()) {
            layers.push_back(Layer::flatten(l.input_shape, in_format));
            continue;
        }
        const int wf = l.weight_format.frac_bits();
        if (l.output_frac != l.output_format.frac_bits() || l.bias_frac != l.bias_format.frac_bits() ||
            frac != in_format.frac_bits()) {
            fail(ErrorCode::FormatError, "layer " + std::to_string(i) + " grids are not expressible as formats");
        }
        const int shift = wf + frac - l.output_frac;
        QTensor w = round_parameters(l.weights,
                                     l.kind == ShadowKind::Dense
                                         ? Shape{l.output_size(), l.input_size()}
                                         : Shape{l.geometry.filters, l.geometry.channels, l.geometry.kernel,
                                                 l.geometry.kernel},
                                     l.weight_format, wf, saturated);
        QTensor b = round_parameters(l.bias, {l.bias.size()}, l.bias_format, l.bias_frac, saturated);
        const Activation act = l.activation == ActivationKind::ReluN ? Activation::relu_n() : Activation::identity();
        if (l.kind == ShadowKind::Dense) {
            layers.push_back(Layer::dense(std::move(w), std::move(b), in_format, shift, l.clamp_bits, act, l.output_format));
        } else {
            layers.push_back(Layer::conv2d(std::move(w), std::move(b), l.input_shape, l.geometry.stride,
                                           l.geometry.padding, in_format, shift, l.clamp_bits, act, l.output_format));
        }
        in_format = l.output_format;
        frac = l.output_frac;
    }
    return {QNetwork(shadow.input_shape, shadow.input_format, std::move(layers), shadow.class_count), saturated};
}

}  // namespace qaibp::train
