// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "qaibp/network.hpp"

namespace qaibp::io {

inline constexpr int model_file_version = 1;

/// JSON container: architecture fields in clear, raw integer arrays as
/// base64 of little-endian int64. Keys are emitted in sorted order, so equal
/// networks serialize to identical bytes.
std::string model_to_json(const QNetwork& net);
QNetwork model_from_json(const std::string& text);

void save_model(const std::string& path, const QNetwork& net);
QNetwork load_model(const std::string& path);

}  // namespace qaibp::io
