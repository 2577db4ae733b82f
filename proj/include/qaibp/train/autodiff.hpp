// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qaibp/fixedpoint.hpp"
#include "qaibp/train/shadow.hpp"

namespace qaibp::train {

/// Quantized: every rounding of the integer network is simulated (floor
/// after each layer, nearest for parameters) with straight-through gradients.
/// Smooth: the roundings are dropped and only the clamps remain, which makes
/// the forward piecewise linear and suitable for finite differences.
enum class Semantics { Quantized, Smooth };

struct RawRange {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
};

struct FakeQuant {
    double value = 0.0;
    double gradient = 0.0;  // 1 where the value passed unclamped, else 0
};

/// Rounds x onto the grid 2^-frac_bits, clamps the raw value into `range`
/// and returns it as a real number together with the straight-through mask.
FakeQuant fake_quant(double x, int frac_bits, RawRange range, Rounding rounding = Rounding::Floor);

/// Clamp-only counterpart of fake_quant used by Smooth semantics.
FakeQuant clip_range(double x, int frac_bits, RawRange range);

/// Parameter gradients, shaped like the shadow's weights and biases.
struct ParamGrads {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    static ParamGrads like(const ShadowNetwork& net);
    void zero();
    void scale(double factor);
    void add(const ParamGrads& other);
    double squared_norm() const;
};

/// Fake-quantized parameters of a shadow, computed once and shared by every
/// forward/backward pass that uses the same parameter values.
class PreparedNetwork {
public:
    PreparedNetwork(const ShadowNetwork& net, Semantics semantics);

    const ShadowNetwork& shadow() const noexcept { return *net_; }
    Semantics semantics() const noexcept { return semantics_; }
    const std::vector<double>& weights(std::size_t layer) const { return weights_[layer]; }
    const std::vector<double>& bias(std::size_t layer) const { return bias_[layer]; }

    /// Multiplies gradients with respect to the effective parameters by the
    /// straight-through masks, giving gradients for the shadow parameters.
    void apply_parameter_masks(ParamGrads& grads) const;

private:
    const ShadowNetwork* net_;
    Semantics semantics_;
    std::vector<std::vector<double>> weights_, bias_;
    std::vector<std::vector<double>> weight_pass_, bias_pass_;
};

struct PointTape {
    std::vector<std::vector<double>> inputs;  // input of every layer
    std::vector<std::vector<double>> pass;    // activation masks of parametric layers
};

/// Real-valued logits of one input given in real units.
std::vector<double> forward_point(const PreparedNetwork& net, std::span<const double> x, PointTape* tape = nullptr);

/// Accumulates parameter gradients of <dlogits, logits>; when `dinput` is
/// nonnull it receives the input gradient.
void backward_point(const PreparedNetwork& net, const PointTape& tape, std::span<const double> dlogits,
                    ParamGrads& grads, std::vector<double>* dinput = nullptr);

struct IntervalTape {
    std::vector<std::vector<double>> mu, radius;  // input box of every layer in center/radius form
    std::vector<std::vector<double>> pass_lo, pass_hi;
    bool elided = false;
    std::size_t label = 0;
};

struct IntervalForward {
    std::vector<double> lower, upper;  // logit bounds
    /// Lower bounds on logit[label] - logit[j], j != label in ascending j.
    /// Elided through the final dense layer when requested and possible,
    /// otherwise lower[label] - upper[j].
    std::vector<double> margins;
    std::size_t saturated_units = 0;  // hidden ReLU-N units whose upper pre-clamp bound exceeds the clamp
    std::size_t hidden_units = 0;
};

/// Interval forward over the box [lo, hi] in real units.
IntervalForward forward_interval(const PreparedNetwork& net, std::span<const double> lo, std::span<const double> hi,
                                 std::size_t label, bool elide_last_layer, IntervalTape* tape = nullptr);

/// Accumulates parameter gradients of <dmargins, margins>.
void backward_interval(const PreparedNetwork& net, const IntervalTape& tape, std::span<const double> dmargins,
                       ParamGrads& grads);

/// Real-valued input of a quantized tensor: raw * 2^-frac.
std::vector<double> to_real(const QTensor& x);

}  // namespace qaibp::train
