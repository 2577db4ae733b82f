// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include <limits>

#include "qaibp/error.hpp"
#include "qaibp/verify/verify.hpp"

namespace qaibp::verify {

std::uint64_t box_points(const RawBox& box) {
    constexpr std::uint64_t cap = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t n = 1;
    for (std::size_t i = 0; i < box.lo.size(); ++i) {
        const auto w = static_cast<std::uint64_t>(box.hi[i] - box.lo[i]) + 1;
        if (n > cap / w) return cap;
        n *= w;
    }
    return n;
}

bool is_singleton(const RawBox& box) { return box.lo == box.hi; }

std::pair<RawBox, RawBox> split(const RawBox& box) {
    std::size_t dim = 0;
    std::int64_t width = 0;
    for (std::size_t i = 0; i < box.lo.size(); ++i) {
        const std::int64_t w = box.hi[i] - box.lo[i];
        if (w > width) {
            width = w;
            dim = i;
        }
    }
    if (width == 0) fail(ErrorCode::SingletonRegion, "cannot split a region with a single point");
    const std::int64_t mid = box.lo[dim] + width / 2;
    std::pair<RawBox, RawBox> out{box, box};
    out.first.hi[dim] = mid;
    out.second.lo[dim] = mid + 1;
    return out;
}

std::pair<ibp::IntervalTensor, ibp::IntervalTensor> split(const ibp::IntervalTensor& region) {
    const RawBox box{{region.lower().raw().begin(), region.lower().raw().end()},
                     {region.upper().raw().begin(), region.upper().raw().end()}};
    auto [a, b] = split(box);
    const auto make = [&](RawBox& r) {
        return ibp::IntervalTensor(QTensor(region.shape(), region.format(), std::move(r.lo)),
                                   QTensor(region.shape(), region.format(), std::move(r.hi)));
    };
    return {make(a), make(b)};
}

RawBox input_box(const QNetwork& net, const QTensor& x, std::int64_t eps) {
    check_input(net, x);
    const auto region = ibp::input_region(x, eps);
    return {{region.lower().raw().begin(), region.lower().raw().end()},
            {region.upper().raw().begin(), region.upper().raw().end()}};
}

}  // namespace qaibp::verify
