// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for the JSON containers: base64 blobs of little-endian
// numbers, format strings and file access.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "qaibp/fixedpoint.hpp"

namespace qaibp::io::detail {

using nlohmann::json;

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text, const std::string& what);

std::string encode_i64(const std::vector<std::int64_t>& values);
std::vector<std::int64_t> decode_i64(const std::string& text, const std::string& what);
std::string encode_f64(const std::vector<double>& values);
std::vector<double> decode_f64(const std::string& text, const std::string& what);

/// "Q2.6s" / "Q3.5u".
std::string format_to_string(const QFormat& f);
QFormat format_from_string(const std::string& text);

json shape_to_json(const Shape& shape);
Shape shape_from_json(const json& j, const std::string& what);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

/// Typed member access that reports the JSON path on failure.
const json& member(const json& j, const std::string& key, const std::string& path);

}  // namespace qaibp::io::detail
