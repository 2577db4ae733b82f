// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

// Random instance generators and independent reference implementations used
// across the unit tests. The reference forward pass is written from the layer
// definition with arbitrary-precision integers and shares no code with the
// library's evaluation routines.

#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "qaibp/network.hpp"

namespace qaibp::test {

using BigInt = boost::multiprecision::cpp_int;

inline std::int64_t uniform(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

/// floor(a / 2^s) in exact arithmetic.
inline BigInt big_floor_shift(const BigInt& a, int s) {
    const BigInt d = BigInt(1) << s;
    BigInt q = a / d;  // truncates toward zero
    if (a < 0 && q * d != a) q -= 1;
    return q;
}

inline QTensor random_tensor(std::mt19937_64& rng, Shape shape, QFormat f) {
    std::vector<std::int64_t> raw(shape_size(shape));
    for (auto& v : raw) v = uniform(rng, f.raw_min(), f.raw_max());
    return QTensor(std::move(shape), f, std::move(raw));
}

struct RandomNetOptions {
    int input_bits = 4;
    int weight_bits = 3;
    int act_bits = 4;
    int max_shift = 3;
    bool conv = false;
    bool lookup = false;  // use a random monotone table in hidden layers
};

/// Random dense or conv network with consistent formats and random shifts.
inline QNetwork random_network(std::mt19937_64& rng, Shape input_shape, const std::vector<std::size_t>& hidden,
                               std::size_t classes, const RandomNetOptions& opt = {}) {
    const QFormat in_format = QFormat::unsigned_bits(opt.input_bits, static_cast<int>(uniform(rng, 0, opt.input_bits)));
    std::vector<Layer> layers;
    Shape shape = input_shape;
    QFormat cur = in_format;
    const auto make_formats = [&](QFormat input) {
        const int wf = static_cast<int>(uniform(rng, 0, opt.weight_bits - 1));
        const QFormat wfmt = QFormat::signed_bits(opt.weight_bits, wf);
        const int bf = static_cast<int>(uniform(rng, 0, wf + input.frac_bits()));
        const QFormat bfmt = QFormat::signed_bits(std::min(opt.weight_bits + 3, 32), std::min(bf, opt.weight_bits + 2));
        return std::pair{wfmt, bfmt};
    };
    for (std::size_t h : hidden) {
        const auto [wfmt, bfmt] = make_formats(cur);
        const QFormat out = QFormat::unsigned_bits(opt.act_bits, static_cast<int>(uniform(rng, 0, opt.act_bits)));
        const int shift = static_cast<int>(uniform(rng, 0, opt.max_shift));
        Activation act = Activation::relu_n();
        if (opt.lookup) {
            std::vector<std::int64_t> table(static_cast<std::size_t>(relu_n_max(opt.act_bits)) + 1);
            std::int64_t v = 0;
            for (auto& t : table) {
                v = std::min<std::int64_t>(out.raw_max(), v + uniform(rng, 0, 2));
                t = v;
            }
            act = Activation::lookup(std::move(table));
        }
        if (opt.conv && shape.size() == 3) {
            const std::size_t k = static_cast<std::size_t>(uniform(rng, 1, 3));
            const std::size_t stride = static_cast<std::size_t>(uniform(rng, 1, 2));
            const Padding pad = uniform(rng, 0, 1) ? Padding::Same : Padding::Valid;
            if (pad == Padding::Valid && (k > shape[1] || k > shape[2])) continue;
            QTensor kernel = random_tensor(rng, {h, shape[0], k, k}, wfmt);
            QTensor bias = random_tensor(rng, {h}, bfmt);
            layers.push_back(Layer::conv2d(std::move(kernel), std::move(bias), shape, stride, pad, cur, shift,
                                           opt.act_bits, act, out));
        } else {
            if (shape.size() != 1) {
                layers.push_back(Layer::flatten(shape, cur));
                shape = layers.back().output_shape();
            }
            QTensor w = random_tensor(rng, {h, shape[0]}, wfmt);
            QTensor b = random_tensor(rng, {h}, bfmt);
            layers.push_back(Layer::dense(std::move(w), std::move(b), cur, shift, opt.act_bits, act, out));
        }
        shape = layers.back().output_shape();
        cur = out;
    }
    if (shape.size() != 1) {
        layers.push_back(Layer::flatten(shape, cur));
        shape = layers.back().output_shape();
    }
    const auto [wfmt, bfmt] = make_formats(cur);
    QTensor w = random_tensor(rng, {classes, shape[0]}, wfmt);
    QTensor b = random_tensor(rng, {classes}, bfmt);
    const int shift = static_cast<int>(uniform(rng, 0, opt.max_shift));
    layers.push_back(Layer::dense(std::move(w), std::move(b), cur, shift, 0, Activation::identity(),
                                  QFormat::signed_bits(32, 0)));
    return QNetwork(std::move(input_shape), in_format, std::move(layers), classes);
}

/// Reference layer evaluation from the definition, in exact arithmetic.
inline std::vector<std::int64_t> reference_layer(const Layer& layer, const std::vector<std::int64_t>& x) {
    if (layer.is_flatten()) return x;
    const QTensor& w = layer.weights();
    const QTensor& b = layer.bias();
    const std::size_t n_out = layer.output_size();
    std::vector<BigInt> acc(n_out);
    if (layer.kind() == Layer::Kind::Dense) {
        const std::size_t n_in = x.size();
        for (std::size_t o = 0; o < n_out; ++o) {
            BigInt s = BigInt(b[o]) * (BigInt(1) << layer.bias_shift());
            for (std::size_t i = 0; i < n_in; ++i) s += BigInt(w[o * n_in + i]) * x[i];
            acc[o] = s;
        }
    } else {
        const ConvGeometry& g = layer.geometry();
        const auto H = static_cast<long>(g.height), W = static_cast<long>(g.width);
        const auto K = static_cast<long>(g.kernel);
        for (std::size_t f = 0; f < g.filters; ++f) {
            for (std::size_t oy = 0; oy < g.out_height; ++oy) {
                for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                    BigInt s = BigInt(b[f]) * (BigInt(1) << layer.bias_shift());
                    for (std::size_t c = 0; c < g.channels; ++c) {
                        for (long ky = 0; ky < K; ++ky) {
                            for (long kx = 0; kx < K; ++kx) {
                                const long iy = static_cast<long>(oy * g.stride) + ky - static_cast<long>(g.pad_top);
                                const long ix = static_cast<long>(ox * g.stride) + kx - static_cast<long>(g.pad_left);
                                if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;  // zero padding
                                const auto wi = ((f * g.channels + c) * g.kernel + static_cast<std::size_t>(ky)) *
                                                    g.kernel +
                                                static_cast<std::size_t>(kx);
                                s += BigInt(w[wi]) * x[(c * g.height + static_cast<std::size_t>(iy)) * g.width +
                                                       static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                    acc[(f * g.out_height + oy) * g.out_width + ox] = s;
                }
            }
        }
    }
    std::vector<std::int64_t> out(n_out);
    const QFormat of = layer.output_format();
    for (std::size_t o = 0; o < n_out; ++o) {
        BigInt v = big_floor_shift(acc[o], layer.rescale_shift());
        switch (layer.activation().kind()) {
        case ActivationKind::Identity:
            if (v < of.raw_min()) v = of.raw_min();
            if (v > of.raw_max()) v = of.raw_max();
            out[o] = static_cast<std::int64_t>(v);
            break;
        case ActivationKind::ReluN:
        case ActivationKind::Lookup: {
            const BigInt top = (BigInt(1) << layer.clamp_bits()) - 1;
            if (v > top) v = top;
            if (v < 0) v = 0;
            const auto idx = static_cast<std::int64_t>(v);
            out[o] = layer.activation().kind() == ActivationKind::ReluN
                         ? idx
                         : layer.activation().table()[static_cast<std::size_t>(idx)];
            break;
        }
        }
    }
    return out;
}

inline std::vector<std::int64_t> reference_forward(const QNetwork& net, std::vector<std::int64_t> x) {
    for (const auto& l : net.layers()) x = reference_layer(l, x);
    return x;
}

/// Visits every integer point of the box [lo, hi].
inline void for_each_point(const std::vector<std::int64_t>& lo, const std::vector<std::int64_t>& hi,
                           const std::function<void(const std::vector<std::int64_t>&)>& visit) {
    std::vector<std::int64_t> x = lo;
    while (true) {
        visit(x);
        std::size_t d = x.size();
        while (d > 0) {
            --d;
            if (x[d] < hi[d]) {
                ++x[d];
                break;
            }
            x[d] = lo[d];
            if (d == 0) return;
        }
        if (x.empty()) return;
    }
}

}  // namespace qaibp::test
