// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/train/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qaibp/error.hpp"

namespace qaibp::train {

FakeQuant fake_quant(double x, int frac_bits, RawRange range, Rounding rounding) {
    const double scaled = std::ldexp(x, frac_bits);
    const double raw = rounding == Rounding::Floor ? std::floor(scaled) : std::round(scaled);
    const auto lo = static_cast<double>(range.lo);
    const auto hi = static_cast<double>(range.hi);
    if (raw < lo) return {std::ldexp(lo, -frac_bits), 0.0};
    if (raw > hi) return {std::ldexp(hi, -frac_bits), 0.0};
    return {std::ldexp(raw, -frac_bits), 1.0};
}

FakeQuant clip_range(double x, int frac_bits, RawRange range) {
    const double lo = std::ldexp(static_cast<double>(range.lo), -frac_bits);
    const double hi = std::ldexp(static_cast<double>(range.hi), -frac_bits);
    if (x < lo) return {lo, 0.0};
    if (x > hi) return {hi, 0.0};
    return {x, 1.0};
}

ParamGrads ParamGrads::like(const ShadowNetwork& net) {
    ParamGrads g;
    for (const auto& l : net.layers) {
        g.weights.emplace_back(l.weights.size(), 0.0);
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

void ParamGrads::zero() {
    for (auto& v : weights) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : bias) std::fill(v.begin(), v.end(), 0.0);
}

void ParamGrads::scale(double factor) {
    for (auto& v : weights) for (auto& x : v) x *= factor;
    for (auto& v : bias) for (auto& x : v) x *= factor;
}

void ParamGrads::add(const ParamGrads& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
    }
}

double ParamGrads::squared_norm() const {
    double s = 0.0;
    for (const auto& v : weights) for (double x : v) s += x * x;
    for (const auto& v : bias) for (double x : v) s += x * x;
    return s;
}

namespace {

RawRange format_range(QFormat f) { return {f.raw_min(), f.raw_max()}; }

FakeQuant quantize_parameter(double x, int frac, QFormat format, Semantics s) {
    return s == Semantics::Quantized ? fake_quant(x, frac, format_range(format), Rounding::Nearest)
                                     : clip_range(x, frac, format_range(format));
}

FakeQuant apply_activation(const ShadowLayer& l, double pre, Semantics s) {
    const RawRange range = l.activation == ActivationKind::ReluN ? RawRange{0, relu_n_max(l.clamp_bits)}
                                                                 : format_range(l.output_format);
    return s == Semantics::Quantized ? fake_quant(pre, l.output_frac, range, Rounding::Floor)
                                     : clip_range(pre, l.output_frac, range);
}

/// Calls visit(out, w, in) for every multiply of a dense or conv layer.
template <class Visit>
void visit_taps(const ShadowLayer& l, Visit&& visit) {
    if (l.kind == ShadowKind::Dense) {
        const std::size_t n = l.input_size();
        const std::size_t m = l.output_size();
        for (std::size_t o = 0; o < m; ++o) {
            for (std::size_t i = 0; i < n; ++i) visit(o, o * n + i, i);
        }
        return;
    }
    const ConvGeometry& g = l.geometry;
    const std::size_t k = g.kernel;
    for (std::size_t f = 0; f < g.filters; ++f) {
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) {
                const std::size_t o = (f * g.out_height + oy) * g.out_width + ox;
                for (std::size_t c = 0; c < g.channels; ++c) {
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.pad_top);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                            static_cast<std::ptrdiff_t>(g.pad_left);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                            visit(o, ((f * g.channels + c) * k + ky) * k + kx,
                                  (c * g.height + static_cast<std::size_t>(iy)) * g.width + static_cast<std::size_t>(ix));
                        }
                    }
                }
            }
        }
    }
}

std::size_t bias_index(const ShadowLayer& l, std::size_t o) {
    return l.kind == ShadowKind::Dense ? o : o / (l.geometry.out_height * l.geometry.out_width);
}

void check_finite(std::span<const double> v, std::size_t layer) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            fail(ErrorCode::NumericError, "non-finite activation in layer " + std::to_string(layer));
        }
    }
}

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

PreparedNetwork::PreparedNetwork(const ShadowNetwork& net, Semantics semantics) : net_(&net), semantics_(semantics) {
    for (const auto& l : net.layers) {
        auto& w = weights_.emplace_back(l.weights.size());
        auto& wp = weight_pass_.emplace_back(l.weights.size());
        auto& b = bias_.emplace_back(l.bias.size());
        auto& bp = bias_pass_.emplace_back(l.bias.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const auto q = quantize_parameter(l.weights[i], l.weight_format.frac_bits(), l.weight_format, semantics);
            w[i] = q.value;
            wp[i] = q.gradient;
        }
        for (std::size_t i = 0; i < b.size(); ++i) {
            const auto q = quantize_parameter(l.bias[i], l.bias_frac, l.bias_format, semantics);
            b[i] = q.value;
            bp[i] = q.gradient;
        }
    }
}

void PreparedNetwork::apply_parameter_masks(ParamGrads& grads) const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (std::size_t i = 0; i < weight_pass_[l].size(); ++i) grads.weights[l][i] *= weight_pass_[l][i];
        for (std::size_t i = 0; i < bias_pass_[l].size(); ++i) grads.bias[l][i] *= bias_pass_[l][i];
    }
}

std::vector<double> forward_point(const PreparedNetwork& pnet, std::span<const double> x, PointTape* tape) {
    const ShadowNetwork& net = pnet.shadow();
    if (x.size() != net.input_size()) {
        fail(ErrorCode::ShapeError, "input has " + std::to_string(x.size()) + " elements, network expects " +
                                        std::to_string(net.input_size()));
    }
    std::vector<double> cur(x.begin(), x.end());
    if (tape) {
        tape->inputs.clear();
        tape->pass.clear();
    }
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const ShadowLayer& l = net.layers[li];
        if (tape) tape->inputs.push_back(cur);
        if (!l.parametric()) {
            if (tape) tape->pass.emplace_back();
            continue;
        }
        const auto& w = pnet.weights(li);
        const auto& b = pnet.bias(li);
        std::vector<double> pre(l.output_size());
        for (std::size_t o = 0; o < pre.size(); ++o) pre[o] = b[bias_index(l, o)];
        visit_taps(l, [&](std::size_t o, std::size_t wi, std::size_t i) { pre[o] += w[wi] * cur[i]; });
        std::vector<double> pass(pre.size());
        for (std::size_t o = 0; o < pre.size(); ++o) {
            const auto a = apply_activation(l, pre[o], pnet.semantics());
            pre[o] = a.value;
            pass[o] = a.gradient;
        }
        check_finite(pre, li);
        if (tape) tape->pass.push_back(std::move(pass));
        cur = std::move(pre);
    }
    return cur;
}

void backward_point(const PreparedNetwork& pnet, const PointTape& tape, std::span<const double> dlogits,
                    ParamGrads& grads, std::vector<double>* dinput) {
    const ShadowNetwork& net = pnet.shadow();
    std::vector<double> d(dlogits.begin(), dlogits.end());
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const ShadowLayer& l = net.layers[li];
        if (!l.parametric()) continue;
        const auto& w = pnet.weights(li);
        const auto& x = tape.inputs[li];
        const auto& pass = tape.pass[li];
        for (std::size_t o = 0; o < d.size(); ++o) {
            d[o] *= pass[o];
            grads.bias[li][bias_index(l, o)] += d[o];
        }
        auto& gw = grads.weights[li];
        const bool need_input = li > 0 || dinput != nullptr;
        std::vector<double> din(need_input ? x.size() : 0, 0.0);
        if (need_input) {
            visit_taps(l, [&](std::size_t o, std::size_t wi, std::size_t i) {
                gw[wi] += d[o] * x[i];
                din[i] += w[wi] * d[o];
            });
        } else {
            visit_taps(l, [&](std::size_t o, std::size_t wi, std::size_t i) { gw[wi] += d[o] * x[i]; });
        }
        d = std::move(din);
    }
    if (dinput) {
        if (d.size() != net.input_size()) d.assign(net.input_size(), 0.0);  // no parametric layers
        *dinput = std::move(d);
    }
}

namespace {

double floor_to_grid(double v, int frac, Semantics s) {
    return s == Semantics::Quantized ? std::ldexp(std::floor(std::ldexp(v, frac)), -frac) : v;
}

}  // namespace

IntervalForward forward_interval(const PreparedNetwork& pnet, std::span<const double> lo, std::span<const double> hi,
                                 std::size_t label, bool elide_last_layer, IntervalTape* tape) {
    const ShadowNetwork& net = pnet.shadow();
    if (lo.size() != net.input_size() || hi.size() != net.input_size()) {
        fail(ErrorCode::ShapeError, "input box does not match the network input");
    }
    if (label >= net.class_count) {
        fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " out of range for " +
                                          std::to_string(net.class_count) + " classes");
    }
    IntervalForward out;
    std::vector<double> mu(lo.size()), rad(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        mu[i] = (lo[i] + hi[i]) / 2;
        rad[i] = (hi[i] - lo[i]) / 2;
    }
    if (tape) {
        tape->mu.clear();
        tape->radius.clear();
        tape->pass_lo.clear();
        tape->pass_hi.clear();
        tape->label = label;
    }
    const std::size_t n_layers = net.layers.size();
    const bool elide = elide_last_layer && n_layers > 0 && net.layers.back().kind == ShadowKind::Dense;
    std::vector<double> lower(mu), upper(mu);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        lower[i] = mu[i] - rad[i];
        upper[i] = mu[i] + rad[i];
    }
    std::vector<double> pen_mu, pen_rad;
    for (std::size_t li = 0; li < n_layers; ++li) {
        const ShadowLayer& l = net.layers[li];
        if (tape) {
            tape->mu.push_back(mu);
            tape->radius.push_back(rad);
        }
        if (!l.parametric()) {
            if (tape) {
                tape->pass_lo.emplace_back();
                tape->pass_hi.emplace_back();
            }
            continue;
        }
        if (li + 1 == n_layers) {
            pen_mu = mu;
            pen_rad = rad;
        }
        const auto& w = pnet.weights(li);
        const auto& b = pnet.bias(li);
        const std::size_t m = l.output_size();
        std::vector<double> pmu(m), prad(m, 0.0);
        for (std::size_t o = 0; o < m; ++o) pmu[o] = b[bias_index(l, o)];
        visit_taps(l, [&](std::size_t o, std::size_t wi, std::size_t i) {
            pmu[o] += w[wi] * mu[i];
            prad[o] += std::abs(w[wi]) * rad[i];
        });
        std::vector<double> plo(m), phi(m);
        lower.resize(m);
        upper.resize(m);
        const bool hidden = li + 1 < n_layers && l.activation == ActivationKind::ReluN;
        const double clamp_top = std::ldexp(static_cast<double>(relu_n_max(l.clamp_bits)), -l.output_frac);
        for (std::size_t o = 0; o < m; ++o) {
            const auto a = apply_activation(l, pmu[o] - prad[o], pnet.semantics());
            const auto c = apply_activation(l, pmu[o] + prad[o], pnet.semantics());
            lower[o] = a.value;
            upper[o] = c.value;
            plo[o] = a.gradient;
            phi[o] = c.gradient;
            if (hidden) {
                ++out.hidden_units;
                if (pmu[o] + prad[o] > clamp_top) ++out.saturated_units;
            }
        }
        check_finite(lower, li);
        check_finite(upper, li);
        if (tape) {
            tape->pass_lo.push_back(std::move(plo));
            tape->pass_hi.push_back(std::move(phi));
        }
        mu.resize(m);
        rad.resize(m);
        for (std::size_t o = 0; o < m; ++o) {
            mu[o] = (lower[o] + upper[o]) / 2;
            rad[o] = (upper[o] - lower[o]) / 2;
        }
    }
    out.lower = lower;
    out.upper = upper;
    if (tape) tape->elided = elide;
    const std::size_t classes = lower.size();
    if (elide) {
        const ShadowLayer& last = net.layers.back();
        const auto& w = pnet.weights(n_layers - 1);
        const auto& b = pnet.bias(n_layers - 1);
        const std::size_t n = last.input_size();
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == label) continue;
            double dsum = b[label] - b[j];
            for (std::size_t i = 0; i < n; ++i) {
                const double d = w[label * n + i] - w[j * n + i];
                dsum += d * pen_mu[i] - std::abs(d) * pen_rad[i];
            }
            out.margins.push_back(floor_to_grid(dsum, last.output_frac, pnet.semantics()));
        }
    } else {
        for (std::size_t j = 0; j < classes; ++j) {
            if (j != label) out.margins.push_back(lower[label] - upper[j]);
        }
    }
    return out;
}

void backward_interval(const PreparedNetwork& pnet, const IntervalTape& tape, std::span<const double> dmargins,
                       ParamGrads& grads) {
    const ShadowNetwork& net = pnet.shadow();
    const std::size_t n_layers = net.layers.size();
    const std::size_t label = tape.label;
    const std::size_t classes = net.class_count;
    // Gradients flow backwards as (d lower, d upper) of each layer's output.
    std::vector<double> dlo, dhi;
    std::size_t li = n_layers;
    if (tape.elided) {
        li = n_layers - 1;
        const ShadowLayer& last = net.layers[li];
        const auto& w = pnet.weights(li);
        const auto& mu = tape.mu[li];
        const auto& rad = tape.radius[li];
        const std::size_t n = last.input_size();
        std::vector<double> dmu(n, 0.0), drad(n, 0.0);
        auto& gw = grads.weights[li];
        auto& gb = grads.bias[li];
        std::size_t k = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == label) continue;
            const double g = dmargins[k++];
            if (g == 0.0) continue;
            gb[label] += g;
            gb[j] -= g;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = w[label * n + i] - w[j * n + i];
                const double s = sign(d);
                const double gd = g * (mu[i] - s * rad[i]);
                gw[label * n + i] += gd;
                gw[j * n + i] -= gd;
                dmu[i] += g * d;
                drad[i] -= g * std::abs(d);
            }
        }
        dlo.resize(n);
        dhi.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            dlo[i] = (dmu[i] - drad[i]) / 2;
            dhi[i] = (dmu[i] + drad[i]) / 2;
        }
    } else {
        dlo.assign(classes, 0.0);
        dhi.assign(classes, 0.0);
        std::size_t k = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == label) continue;
            dlo[label] += dmargins[k];
            dhi[j] -= dmargins[k];
            ++k;
        }
    }
    while (li-- > 0) {
        const ShadowLayer& l = net.layers[li];
        if (!l.parametric()) continue;
        const auto& w = pnet.weights(li);
        const auto& mu = tape.mu[li];
        const auto& rad = tape.radius[li];
        const auto& plo = tape.pass_lo[li];
        const auto& phi = tape.pass_hi[li];
        const std::size_t m = l.output_size();
        std::vector<double> dmu(m), drad(m);
        auto& gb = grads.bias[li];
        for (std::size_t o = 0; o < m; ++o) {
            const double a = dlo[o] * plo[o];
            const double c = dhi[o] * phi[o];
            dmu[o] = a + c;
            drad[o] = c - a;
            gb[bias_index(l, o)] += dmu[o];
        }
        auto& gw = grads.weights[li];
        if (li == 0) {
            visit_taps(l, [&](std::size_t o, std::size_t wi, std::size_t i) {
                gw[wi] += dmu[o] * mu[i] + sign(w[wi]) * drad[o] * rad[i];
            });
            break;
        }
        std::vector<double> dmu_in(mu.size(), 0.0), drad_in(mu.size(), 0.0);
        visit_taps(l, [&](std::size_t o, std::size_t wi, std::size_t i) {
            gw[wi] += dmu[o] * mu[i] + sign(w[wi]) * drad[o] * rad[i];
            dmu_in[i] += w[wi] * dmu[o];
            drad_in[i] += std::abs(w[wi]) * drad[o];
        });
        dlo.resize(mu.size());
        dhi.resize(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) {
            dlo[i] = (dmu_in[i] - drad_in[i]) / 2;
            dhi[i] = (dmu_in[i] + drad_in[i]) / 2;
        }
    }
}

std::vector<double> to_real(const QTensor& x) {
    std::vector<double> v(x.size());
    const int frac = x.format().frac_bits();
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = dequantize(x[i], frac);
    return v;
}

}  // namespace qaibp::train
