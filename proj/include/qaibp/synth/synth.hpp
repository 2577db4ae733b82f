// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "qaibp/network.hpp"
#include "qaibp/verify/verify.hpp"

namespace qaibp::synth {

struct OracleResult {
    verify::Verdict verdict = verify::Verdict::Robust;  // Robust or Vulnerable
    std::optional<QTensor> witness;                     // first misclassified point in lexicographic order
    std::uint64_t points_checked = 0;
};

/// Exhaustive check of every grid point x' with |x' - x|_inf <= eps inside
/// the input range. Throws BudgetExceeded if the ball has more than `budget`
/// points.
OracleResult brute_force_verify(const QNetwork& net, const QTensor& x, std::int64_t eps,
                                std::uint64_t budget = 1000000);

/// One-dimensional labelled points on the k-bit unsigned integer grid.
struct PointDataset1D {
    struct Point {
        std::int64_t x = 0;
        std::size_t label = 0;
        friend bool operator==(const Point&, const Point&) = default;
    };
    std::vector<Point> points;
    int bits = 8;
    std::size_t class_count = 2;

    QFormat input_format() const { return QFormat::unsigned_bits(bits); }
    /// Throws InvalidValue on duplicate or out-of-range points and
    /// InvalidLabel on labels outside [0, class_count).
    void validate() const;
};

/// Radius of the closed integer ball equal to the strict ball of radius
/// eps; eps = 0 keeps the point itself.
std::int64_t strict_radius(std::int64_t eps);

/// Every in-range grid point strictly closer than eps to a dataset point,
/// labelled like it, sorted by x. Throws GapViolation when two balls with
/// different labels share a point.
PointDataset1D expand_dataset(const PointDataset1D& dataset, std::int64_t eps);

/// Four ReLU units whose signed sum minus one is the indicator of z == target:
/// relu(z - t + 1) - relu(z - t) + relu(t - z + 1) - relu(t - z) - 1.
struct IndicatorGadget {
    std::array<std::int64_t, 4> input_weights{1, 1, -1, -1};
    std::array<std::int64_t, 4> biases{};
    std::array<std::int64_t, 4> output_weights{1, -1, 1, -1};
    std::int64_t output_bias = -1;
};

IndicatorGadget indicator_gadget(std::int64_t target);
std::int64_t gadget_value(const IndicatorGadget& gadget, std::int64_t z);

/// Single-hidden-layer network that classifies every point of the strict
/// eps-ball of each dataset point like that point.
QNetwork construct_robust_qnn(const PointDataset1D& dataset, std::int64_t eps);

/// Number of hidden units of a constructed network.
std::size_t hidden_units(const QNetwork& net);

}  // namespace qaibp::synth
