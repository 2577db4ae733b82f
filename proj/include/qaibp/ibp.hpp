// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qaibp/fixedpoint.hpp"
#include "qaibp/network.hpp"

namespace qaibp::ibp {

/// Elementwise box [lower, upper] over one tensor shape and format.
class IntervalTensor {
public:
    IntervalTensor() = default;
    IntervalTensor(QTensor lower, QTensor upper);

    /// Degenerate box around one point.
    static IntervalTensor point(const QTensor& x) { return IntervalTensor(x, x); }

    const QTensor& lower() const noexcept { return lower_; }
    const QTensor& upper() const noexcept { return upper_; }
    const Shape& shape() const noexcept { return lower_.shape(); }
    const QFormat& format() const noexcept { return lower_.format(); }
    std::size_t size() const noexcept { return lower_.size(); }

    bool is_point() const;
    /// Every element of `other` lies inside this box.
    bool contains(const IntervalTensor& other) const;
    bool contains(std::span<const std::int64_t> x) const;

    friend bool operator==(const IntervalTensor&, const IntervalTensor&) = default;

private:
    QTensor lower_;
    QTensor upper_;
};

/// Center/radius form with both stored doubled so that (hi + lo) / 2 stays an
/// integer: center2 = hi + lo, radius2 = hi - lo.
struct CenterRadius {
    std::vector<std::int64_t> center2;
    std::vector<std::int64_t> radius2;

    static CenterRadius from_bounds(std::span<const std::int64_t> lo, std::span<const std::int64_t> hi);
};

/// Doubled accumulator bounds of a parametric layer computed in center/radius
/// form: mu2 = W center2 + 2b, r2 = |W| radius2. Reference for the sign-split
/// evaluation used everywhere else; 2*acc_lo = mu2 - r2 and 2*acc_hi = mu2 + r2.
CenterRadius accumulate_center_radius(const Layer& layer, const CenterRadius& input);

/// x +/- eps, clamped to the representable range of the input format.
IntervalTensor input_region(const QTensor& x, std::int64_t eps);

IntervalTensor layer_propagate(const Layer& layer, const IntervalTensor& region);
IntervalTensor propagate(const QNetwork& net, const IntervalTensor& region);

enum class Certification { Certified, Unknown };

/// Certified iff lower[label] > upper[j] for every j != label.
Certification check_robust(const IntervalTensor& logits, std::size_t label);

/// Lower bounds on logit[label] - logit[j] for every j != label (ascending j,
/// label skipped), obtained by pushing the row difference W_label - W_j of the
/// final dense layer through the penultimate box. Each entry is at least the
/// independent bound lower[label] - upper[j].
std::vector<std::int64_t> margin_lower_bounds(const QNetwork& net, const IntervalTensor& region, std::size_t label);

/// Certified iff every margin bound is strictly positive.
Certification check_margins(std::span<const std::int64_t> margins);

/// Raw bounds through every layer, for callers that want to avoid building
/// tensors (the verifier's inner loop). `lo`/`hi` are replaced by the logit
/// bounds; when `penultimate` is nonnull it receives the input box of the
/// final layer.
struct RawBox {
    std::vector<std::int64_t> lo;
    std::vector<std::int64_t> hi;
};
void propagate_raw(const QNetwork& net, RawBox& box, RawBox* penultimate = nullptr);

/// Margin bounds given the final layer's input box and the logit box.
std::vector<std::int64_t> margin_lower_bounds_raw(const Layer& last, const RawBox& penultimate, const RawBox& logits,
                                                  std::size_t label);

}  // namespace qaibp::ibp
