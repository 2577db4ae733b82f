// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/fixedpoint.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "qaibp/error.hpp"

namespace qaibp {

QFormat::QFormat(int int_bits, int frac_bits, bool is_signed)
    : int_bits_(int_bits), frac_bits_(frac_bits), signed_(is_signed) {
    const int k = int_bits + frac_bits;
    if (int_bits < 0 || frac_bits < 0 || k < 1 || k > 32) {
        fail(ErrorCode::FormatError, "fixed-point format needs 1 <= int_bits + frac_bits <= 32, got Q" +
                                         std::to_string(int_bits) + "." + std::to_string(frac_bits));
    }
    if (is_signed && int_bits < 1) {
        fail(ErrorCode::FormatError, "signed fixed-point format needs at least the sign bit as integer bit");
    }
}

QFormat QFormat::parse(const std::string& text, bool is_signed) {
    int m = 0;
    int n = 0;
    char q = 0;
    char dot = 0;
    std::istringstream in(text);
    if (!(in >> q >> m >> dot >> n) || (q != 'Q' && q != 'q') || dot != '.' || !in.eof()) {
        fail(ErrorCode::FormatError, "cannot parse fixed-point format '" + text + "' (expected Qm.n)");
    }
    return QFormat(m, n, is_signed);
}

std::int64_t QFormat::raw_min() const noexcept {
    return signed_ ? -(std::int64_t{1} << (total_bits() - 1)) : 0;
}

std::int64_t QFormat::raw_max() const noexcept {
    return signed_ ? (std::int64_t{1} << (total_bits() - 1)) - 1 : (std::int64_t{1} << total_bits()) - 1;
}

std::string QFormat::to_string() const {
    return "Q" + std::to_string(int_bits_) + "." + std::to_string(frac_bits_) + (signed_ ? "s" : "u");
}

QScalar::QScalar(std::int64_t raw_value, QFormat fmt) : raw(raw_value), format(fmt) {
    if (!format.contains(raw)) {
        fail(ErrorCode::InvalidValue, "raw value " + std::to_string(raw) + " outside " + format.to_string());
    }
}

QScalar quantize(double value, QFormat format, Rounding mode) {
    if (!std::isfinite(value)) {
        fail(ErrorCode::InvalidValue, "cannot quantize a non-finite value");
    }
    // Scaling by a power of two is exact unless it overflows to infinity,
    // which the range comparison below handles.
    const double scaled = std::ldexp(value, format.frac_bits());
    const double rounded = mode == Rounding::Floor ? std::floor(scaled) : std::round(scaled);
    const auto lo = static_cast<double>(format.raw_min());
    const auto hi = static_cast<double>(format.raw_max());
    std::int64_t raw = 0;
    if (rounded <= lo) {
        raw = format.raw_min();
    } else if (rounded >= hi) {
        raw = format.raw_max();
    } else {
        raw = static_cast<std::int64_t>(rounded);
    }
    return QScalar(raw, format);
}

double dequantize(const QScalar& q) { return dequantize(q.raw, q.format.frac_bits()); }

double dequantize(std::int64_t raw, int frac_bits) { return std::ldexp(static_cast<double>(raw), -frac_bits); }

std::int64_t saturate(std::int64_t x, QFormat format) {
    if (x < format.raw_min()) return format.raw_min();
    if (x > format.raw_max()) return format.raw_max();
    return x;
}

bool WideAccumulator::fits(std::size_t fan_in, std::int64_t max_a, std::int64_t max_b, std::int64_t max_extra) {
    using Wide = unsigned __int128;
    const Wide limit = static_cast<Wide>(std::numeric_limits<std::int64_t>::max());
    const Wide worst = static_cast<Wide>(fan_in) * static_cast<Wide>(max_a) * static_cast<Wide>(max_b) +
                       static_cast<Wide>(max_extra);
    return worst <= limit;
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

QTensor::QTensor(Shape shape, QFormat format)
    : shape_(std::move(shape)), format_(format), raw_(shape_size(shape_), 0) {
    if (!format_.contains(0)) {
        fail(ErrorCode::InvalidValue, "zero is not representable in " + format_.to_string());
    }
}

QTensor::QTensor(Shape shape, QFormat format, std::vector<std::int64_t> raw)
    : shape_(std::move(shape)), format_(format), raw_(std::move(raw)) {
    if (raw_.size() != shape_size(shape_)) {
        fail(ErrorCode::ShapeError, "tensor data has " + std::to_string(raw_.size()) + " elements but shape " +
                                        shape_to_string(shape_) + " needs " + std::to_string(shape_size(shape_)));
    }
    for (std::size_t i = 0; i < raw_.size(); ++i) {
        if (!format_.contains(raw_[i])) {
            fail(ErrorCode::InvalidValue, "element " + std::to_string(i) + " = " + std::to_string(raw_[i]) +
                                              " outside " + format_.to_string());
        }
    }
}

QTensor QTensor::reshaped(Shape shape) const {
    if (shape_size(shape) != raw_.size()) {
        fail(ErrorCode::ShapeError, "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    }
    QTensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

}  // namespace qaibp
