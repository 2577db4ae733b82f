// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "qaibp/fixedpoint.hpp"

namespace qaibp {

enum class ActivationKind { ReluN, Identity, Lookup };

/// Quantized activation applied after floor-rescaling.
///   ReluN:    max(0, min(2^N - 1, x))
///   Identity: x saturated into the layer's output format (used for logits)
///   Lookup:   table[max(0, min(2^N - 1, x))], table must be nondecreasing
class Activation {
public:
    static Activation relu_n() { return Activation(ActivationKind::ReluN, {}); }
    static Activation identity() { return Activation(ActivationKind::Identity, {}); }
    static Activation lookup(std::vector<std::int64_t> table);

    ActivationKind kind() const noexcept { return kind_; }
    const std::vector<std::int64_t>& table() const noexcept { return table_; }

    friend bool operator==(const Activation&, const Activation&) = default;

private:
    Activation(ActivationKind kind, std::vector<std::int64_t> table) : kind_(kind), table_(std::move(table)) {}

    ActivationKind kind_ = ActivationKind::ReluN;
    std::vector<std::int64_t> table_;
};

enum class Padding { Same, Valid };

/// Spatial bookkeeping for a CHW convolution. "Same" padding follows the
/// usual convention: output = ceil(in / stride), extra padding at the end.
struct ConvGeometry {
    std::size_t channels = 0, height = 0, width = 0;
    std::size_t filters = 0, kernel = 0, stride = 1;
    Padding padding = Padding::Same;
    std::size_t out_height = 0, out_width = 0;
    std::size_t pad_top = 0, pad_left = 0;

    static ConvGeometry make(const Shape& input_chw, std::size_t filters, std::size_t kernel, std::size_t stride,
                             Padding padding);

    Shape input_shape() const { return {channels, height, width}; }
    Shape output_shape() const { return {filters, out_height, out_width}; }

    friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

struct DenseParams {
    QTensor weights;  // [out x in]
    QTensor bias;     // [out]
    friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

struct Conv2DParams {
    QTensor kernel;  // [F x C x K x K]
    QTensor bias;    // [F]
    ConvGeometry geometry;
    friend bool operator==(const Conv2DParams&, const Conv2DParams&) = default;
};

struct FlattenParams {
    friend bool operator==(const FlattenParams&, const FlattenParams&) = default;
};

/// One quantized layer: acc = sum_j w_ij x_j + (b_i << bias_shift), then
/// y_i = sigma(min(2^N - 1, floor(acc / 2^rescale_shift))). The bias is
/// aligned to the accumulator grid, so bias_shift = weight frac + input frac
/// - bias frac and must be nonnegative.
class Layer {
public:
    enum class Kind { Dense, Conv2D, Flatten };

    static Layer dense(QTensor weights, QTensor bias, QFormat input_format, int rescale_shift, int clamp_bits,
                       Activation activation, QFormat output_format);
    static Layer conv2d(QTensor kernel, QTensor bias, const Shape& input_chw, std::size_t stride, Padding padding,
                        QFormat input_format, int rescale_shift, int clamp_bits, Activation activation,
                        QFormat output_format);
    static Layer flatten(Shape input_shape, QFormat format);

    Kind kind() const noexcept;
    const Shape& input_shape() const noexcept { return input_shape_; }
    const Shape& output_shape() const noexcept { return output_shape_; }
    const QFormat& input_format() const noexcept { return input_format_; }
    const QFormat& output_format() const noexcept { return output_format_; }
    std::size_t input_size() const noexcept { return shape_size(input_shape_); }
    std::size_t output_size() const noexcept { return shape_size(output_shape_); }

    bool is_flatten() const noexcept { return kind() == Kind::Flatten; }
    const QTensor& weights() const;
    const QTensor& bias() const;
    const ConvGeometry& geometry() const;
    int rescale_shift() const noexcept { return rescale_shift_; }
    int clamp_bits() const noexcept { return clamp_bits_; }
    int bias_shift() const noexcept { return bias_shift_; }
    const Activation& activation() const noexcept { return activation_; }

    /// Rescale + clamp + activation for one accumulator value. Monotone
    /// nondecreasing in `acc`, which is what makes interval propagation sound.
    std::int64_t activate(std::int64_t acc) const;

    /// acc = W x + aligned bias, exact.
    void accumulate(std::span<const std::int64_t> x, std::span<std::int64_t> acc) const;
    /// Sign-split interval accumulation: acc_lo/acc_hi are the exact minimum
    /// and maximum of W x + b over the box [lo, hi].
    void accumulate_bounds(std::span<const std::int64_t> lo, std::span<const std::int64_t> hi,
                           std::span<std::int64_t> acc_lo, std::span<std::int64_t> acc_hi) const;

    /// Raw forward without shape validation; `out` is resized.
    void forward_raw(std::span<const std::int64_t> x, std::vector<std::int64_t>& out) const;

    friend bool operator==(const Layer&, const Layer&) = default;

private:
    Layer() = default;
    void validate_parametric();

    std::variant<DenseParams, Conv2DParams, FlattenParams> params_;
    Shape input_shape_;
    Shape output_shape_;
    QFormat input_format_;
    QFormat output_format_;
    int rescale_shift_ = 0;
    int clamp_bits_ = 0;
    int bias_shift_ = 0;
    Activation activation_ = Activation::identity();
};

/// Sequential composition of quantized layers with an argmax classifier on top.
class QNetwork {
public:
    QNetwork(Shape input_shape, QFormat input_format, std::vector<Layer> layers, std::size_t class_count);

    const Shape& input_shape() const noexcept { return input_shape_; }
    const QFormat& input_format() const noexcept { return input_format_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::size_t class_count() const noexcept { return class_count_; }
    std::size_t input_size() const noexcept { return shape_size(input_shape_); }
    QFormat output_format() const { return layers_.empty() ? input_format_ : layers_.back().output_format(); }

    friend bool operator==(const QNetwork&, const QNetwork&) = default;

private:
    Shape input_shape_;
    QFormat input_format_;
    std::vector<Layer> layers_;
    std::size_t class_count_ = 0;
};

QTensor layer_forward(const Layer& layer, const QTensor& input);
QTensor forward(const QNetwork& net, const QTensor& x);

/// Logits for a raw input vector, skipping tensor validation (hot loops).
std::vector<std::int64_t> forward_raw(const QNetwork& net, std::span<const std::int64_t> x);

/// Smallest index attaining the maximum.
std::size_t argmax_smallest(std::span<const std::int64_t> logits);

std::size_t classify(const QNetwork& net, const QTensor& x);
std::size_t classify_raw(const QNetwork& net, std::span<const std::int64_t> x);

/// Throws ShapeError unless x has the network's input shape and format.
void check_input(const QNetwork& net, const QTensor& x);

}  // namespace qaibp
