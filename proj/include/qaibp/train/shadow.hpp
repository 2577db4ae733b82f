// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qaibp/fixedpoint.hpp"
#include "qaibp/network.hpp"

namespace qaibp::train {

enum class ShadowKind { Dense, Conv2D, Flatten };

/// Float-valued mirror of one quantized layer. Values flowing through the
/// shadow are real numbers v = raw * 2^-frac; the `*_frac` fields give the
/// grid of each quantity and may be negative for imported networks whose
/// rescale shifts exceed their fractional bits.
struct ShadowLayer {
    ShadowKind kind = ShadowKind::Flatten;
    Shape input_shape;
    Shape output_shape;
    ConvGeometry geometry;

    std::vector<double> weights;  // dense [out x in], conv [F x C x K x K]
    std::vector<double> bias;

    QFormat weight_format;  // parameter ranges; weights sit on 2^-weight_format.frac_bits()
    QFormat bias_format;
    QFormat output_format;  // declared format of the layer output
    int input_frac = 0;
    int output_frac = 0;
    int bias_frac = 0;  // grid of the aligned bias
    int clamp_bits = 0;
    ActivationKind activation = ActivationKind::Identity;

    bool parametric() const noexcept { return kind != ShadowKind::Flatten; }
    std::size_t input_size() const noexcept { return shape_size(input_shape); }
    std::size_t output_size() const noexcept { return shape_size(output_shape); }
    std::size_t fan_in() const noexcept;
};

struct ShadowNetwork {
    Shape input_shape;
    QFormat input_format;
    std::vector<ShadowLayer> layers;
    std::size_t class_count = 0;

    std::size_t input_size() const noexcept { return shape_size(input_shape); }
    std::size_t parameter_count() const noexcept;
};

struct LayerSpec {
    enum class Kind { Conv, Dense, Flatten };
    Kind kind = Kind::Dense;
    std::size_t units = 0;  // filters for Conv, units for Dense
    std::size_t kernel = 3;
    std::size_t stride = 1;
    Padding padding = Padding::Same;
};

/// Fixed-point formats shared by every layer: signed weights and biases,
/// unsigned activations whose total width is the ReLU-N clamp width.
struct FormatSpec {
    QFormat weight = QFormat::signed_bits(8, 6);
    QFormat bias = QFormat::signed_bits(8, 3);
    QFormat activation = QFormat::unsigned_bits(8, 5);
};

/// Hidden layers use ReLU-N; the classifier head (a final Dense with
/// class_count units) is appended automatically with an identity activation
/// and 32-bit signed logits on the activation grid.
struct ArchitectureSpec {
    Shape input_shape;
    QFormat input_format = QFormat::unsigned_bits(8, 8);
    std::vector<LayerSpec> hidden;
    std::size_t class_count = 10;
    FormatSpec formats;
};

/// Named presets. Architectures: "mnist-arch", "fashion-arch", "cifar-arch",
/// "small-conv", "mlp". Formats: "mnist-formats" (activations Q3.5),
/// "fashion-formats" and "cifar-formats" (activations Q4.4); all use Q5.3
/// biases and Q2.6 weights.
std::vector<LayerSpec> preset_architecture(const std::string& name);
FormatSpec preset_formats(const std::string& name);

/// Randomly initialised shadow (He-uniform weights, zero biases).
ShadowNetwork build_shadow(const ArchitectureSpec& spec, std::uint64_t seed);

/// Dequantized mirror of an exact network; fake quantization reproduces its
/// integer semantics on grid inputs. Lookup activations are not supported.
ShadowNetwork shadow_from_qnetwork(const QNetwork& net);

struct ExportResult {
    QNetwork network;
    std::size_t saturated_parameters = 0;
};

/// Rounds parameters to their formats (nearest, saturating) and builds the
/// exact network. Requires the shadow's grids to be expressible as formats.
ExportResult export_quantized(const ShadowNetwork& shadow);

}  // namespace qaibp::train
