// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qaibp {

/// Fixed-point layout Qm.n: `int_bits` integer bits (the sign bit counts as an
/// integer bit for signed formats) and `frac_bits` fractional bits. A raw value
/// r represents r * 2^-frac_bits exactly.
class QFormat {
public:
    QFormat() = default;
    QFormat(int int_bits, int frac_bits, bool is_signed);

    static QFormat unsigned_bits(int total_bits, int frac_bits = 0) {
        return QFormat(total_bits - frac_bits, frac_bits, false);
    }
    static QFormat signed_bits(int total_bits, int frac_bits = 0) {
        return QFormat(total_bits - frac_bits, frac_bits, true);
    }
    /// Parses "Q3.5" style strings; signedness is supplied separately.
    static QFormat parse(const std::string& text, bool is_signed);

    int int_bits() const noexcept { return int_bits_; }
    int frac_bits() const noexcept { return frac_bits_; }
    bool is_signed() const noexcept { return signed_; }
    int total_bits() const noexcept { return int_bits_ + frac_bits_; }

    std::int64_t raw_min() const noexcept;
    std::int64_t raw_max() const noexcept;
    bool contains(std::int64_t raw) const noexcept { return raw >= raw_min() && raw <= raw_max(); }

    std::string to_string() const;

    friend bool operator==(const QFormat&, const QFormat&) = default;

private:
    int int_bits_ = 8;
    int frac_bits_ = 0;
    bool signed_ = false;
};

enum class Rounding { Floor, Nearest };

struct QScalar {
    std::int64_t raw = 0;
    QFormat format;

    QScalar() = default;
    QScalar(std::int64_t raw_value, QFormat fmt);
};

/// Maps a real value onto the grid of `format`, saturating at the range ends.
QScalar quantize(double value, QFormat format, Rounding mode);

double dequantize(const QScalar& q);
double dequantize(std::int64_t raw, int frac_bits);

/// floor(acc / 2^shift), i.e. an arithmetic right shift.
constexpr std::int64_t rescale_floor(std::int64_t acc, int shift) {
    return shift >= 63 ? (acc < 0 ? -1 : 0) : (acc >> shift);
}

constexpr std::int64_t relu_n_max(int clamp_bits) { return (std::int64_t{1} << clamp_bits) - 1; }

/// max(0, min(2^N - 1, x)).
constexpr std::int64_t clamp_relu_n(std::int64_t x, int clamp_bits) {
    const std::int64_t hi = relu_n_max(clamp_bits);
    return x < 0 ? 0 : (x > hi ? hi : x);
}

std::int64_t saturate(std::int64_t x, QFormat format);

/// Signed 64-bit accumulator for the sums of products feeding a layer. A
/// layer is only constructed when its worst-case sum provably fits (see
/// `fits`), so sums computed here are exact.
class WideAccumulator {
public:
    static constexpr int kBits = 64;

    WideAccumulator() = default;
    explicit WideAccumulator(std::int64_t init) : raw_(init) {}

    void add(std::int64_t v) noexcept { raw_ += v; }
    void add_product(std::int64_t a, std::int64_t b) noexcept { raw_ += a * b; }
    std::int64_t raw() const noexcept { return raw_; }

    /// True when fan_in products bounded by |a| <= max_a, |b| <= max_b plus an
    /// additive term bounded by max_extra cannot overflow.
    static bool fits(std::size_t fan_in, std::int64_t max_a, std::int64_t max_b, std::int64_t max_extra);

private:
    std::int64_t raw_ = 0;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of raw fixed-point values sharing one format.
/// Immutable once constructed; every element is checked against the format.
class QTensor {
public:
    QTensor() = default;
    QTensor(Shape shape, QFormat format);  // zero filled
    QTensor(Shape shape, QFormat format, std::vector<std::int64_t> raw);

    const Shape& shape() const noexcept { return shape_; }
    const QFormat& format() const noexcept { return format_; }
    std::size_t size() const noexcept { return raw_.size(); }
    std::span<const std::int64_t> raw() const noexcept { return raw_; }
    std::int64_t operator[](std::size_t i) const { return raw_[i]; }

    QTensor reshaped(Shape shape) const;

    friend bool operator==(const QTensor&, const QTensor&) = default;

private:
    Shape shape_;
    QFormat format_;
    std::vector<std::int64_t> raw_;
};

}  // namespace qaibp
