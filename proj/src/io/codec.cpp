// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "codec.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <sodium.h>

#include "qaibp/error.hpp"

namespace qaibp::io::detail {

namespace {

constexpr int variant = sodium_base64_VARIANT_ORIGINAL;

template <typename T>
std::string encode_numbers(const std::vector<T>& values) {
    static_assert(std::endian::native == std::endian::little, "blobs are stored little-endian");
    std::vector<std::uint8_t> bytes(values.size() * sizeof(T));
    if (!bytes.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
    return base64_encode(bytes);
}

template <typename T>
std::vector<T> decode_numbers(const std::string& text, const std::string& what) {
    const auto bytes = base64_decode(text, what);
    if (bytes.size() % sizeof(T) != 0) fail(ErrorCode::FormatError, what + ": blob length is not a multiple of 8");
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!bytes.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
    out.resize(std::strlen(out.c_str()));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text, const std::string& what) {
    std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr, variant) != 0) {
        fail(ErrorCode::FormatError, what + ": invalid base64");
    }
    out.resize(len);
    return out;
}

std::string encode_i64(const std::vector<std::int64_t>& values) { return encode_numbers(values); }
std::vector<std::int64_t> decode_i64(const std::string& text, const std::string& what) {
    return decode_numbers<std::int64_t>(text, what);
}
std::string encode_f64(const std::vector<double>& values) { return encode_numbers(values); }
std::vector<double> decode_f64(const std::string& text, const std::string& what) {
    return decode_numbers<double>(text, what);
}

std::string format_to_string(const QFormat& f) { return f.to_string(); }

QFormat format_from_string(const std::string& text) {
    if (text.size() < 2) fail(ErrorCode::FormatError, "malformed format '" + text + "'");
    const char sign = text.back();
    if (sign == 's' || sign == 'u') return QFormat::parse(text.substr(0, text.size() - 1), sign == 's');
    return QFormat::parse(text, false);
}

json shape_to_json(const Shape& shape) { return json(shape); }

Shape shape_from_json(const json& j, const std::string& what) {
    if (!j.is_array()) fail(ErrorCode::FormatError, what + ": shape must be an array");
    Shape s;
    for (const auto& d : j) {
        if (!d.is_number_unsigned() || d.get<std::size_t>() == 0) {
            fail(ErrorCode::FormatError, what + ": dimensions must be positive integers");
        }
        s.push_back(d.get<std::size_t>());
    }
    return s;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    out << contents;
    if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

const json& member(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) fail(ErrorCode::FormatError, path + ": expected an object");
    const auto it = j.find(key);
    if (it == j.end()) fail(ErrorCode::FormatError, path + "." + key + ": missing");
    return *it;
}

}  // namespace qaibp::io::detail
