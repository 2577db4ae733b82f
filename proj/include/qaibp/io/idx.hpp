// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "qaibp/dataset.hpp"

namespace qaibp::io {

/// Pixel byte b becomes raw value b of `input_format`, which must be an
/// unsigned format of at least 8 bits. Images are shaped [1, rows, cols].
struct IdxOptions {
    QFormat input_format = QFormat::unsigned_bits(8, 8);
    std::size_t class_count = 10;
    std::optional<std::size_t> limit;  // keep only the first samples
};

/// Reads an image file (magic 0x00000803) and a label file (magic
/// 0x00000801); either may be gzip-compressed.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, const IdxOptions& options = {});

/// Writes uncompressed IDX files, or gzip-compressed ones for paths ending
/// in ".gz". All samples must share one [1, rows, cols] or [rows, cols] shape.
void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& data);

}  // namespace qaibp::io
