// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/io/idx.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <zlib.h>

#include "qaibp/error.hpp"

namespace qaibp::io {

namespace {

struct GzCloser {
    void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

/// Whole-file read through zlib, which passes uncompressed files through.
std::vector<std::uint8_t> slurp(const std::string& path) {
    GzHandle f(gzopen(path.c_str(), "rb"));
    if (!f) fail(ErrorCode::IoError, "cannot open " + path);
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> buf{};
    for (;;) {
        const int n = gzread(f.get(), buf.data(), static_cast<unsigned>(buf.size()));
        if (n < 0) fail(ErrorCode::IoError, "read error in " + path);
        if (n == 0) break;
        out.insert(out.end(), buf.begin(), buf.begin() + n);
    }
    return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

struct IdxFile {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bytes;
    std::size_t data_offset = 0;
};

IdxFile parse(const std::string& path, std::uint32_t magic, std::size_t rank) {
    IdxFile f;
    f.bytes = slurp(path);
    const std::size_t header = 4 + 4 * rank;
    if (f.bytes.size() < header) {
        fail(ErrorCode::TruncatedFile, path + ": truncated header at byte offset " + std::to_string(f.bytes.size()));
    }
    const std::uint32_t got = be32(f.bytes, 0);
    if (got != magic) {
        fail(ErrorCode::CorruptHeader, path + ": magic number " + std::to_string(got) + ", expected " +
                                           std::to_string(magic));
    }
    std::size_t payload = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        f.dims.push_back(be32(f.bytes, 4 + 4 * i));
        if (i > 0 && f.dims.back() == 0) fail(ErrorCode::CorruptHeader, path + ": zero dimension in header");
        payload *= f.dims.back();
    }
    f.data_offset = header;
    if (f.bytes.size() < header + payload) {
        fail(ErrorCode::TruncatedFile, path + ": file ends at byte offset " + std::to_string(f.bytes.size()) +
                                           ", header promises " + std::to_string(header + payload) + " bytes");
    }
    return f;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    GzHandle f(gzopen(path.c_str(), gz ? "wb9" : "wbT"));
    if (!f) fail(ErrorCode::IoError, "cannot write " + path);
    if (!bytes.empty() && gzwrite(f.get(), bytes.data(), static_cast<unsigned>(bytes.size())) == 0) {
        fail(ErrorCode::IoError, "write failed for " + path);
    }
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, const IdxOptions& options) {
    const QFormat& fmt = options.input_format;
    if (fmt.is_signed() || fmt.raw_max() < 255) {
        fail(ErrorCode::FormatError, "pixel bytes need an unsigned input format of at least 8 bits, got " +
                                         fmt.to_string());
    }
    const IdxFile images = parse(images_path, 0x00000803, 3);
    const IdxFile labels = parse(labels_path, 0x00000801, 1);
    if (images.dims[0] != labels.dims[0]) {
        fail(ErrorCode::CountMismatch, images_path + " has " + std::to_string(images.dims[0]) + " images but " +
                                           labels_path + " has " + std::to_string(labels.dims[0]) + " labels");
    }
    std::size_t count = images.dims[0];
    if (options.limit) count = std::min(count, *options.limit);
    const std::size_t rows = images.dims[1], cols = images.dims[2], pixels = rows * cols;
    Dataset out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = labels.bytes[labels.data_offset + i];
        if (label >= options.class_count) {
            fail(ErrorCode::InvalidLabel, labels_path + ": label " + std::to_string(label) + " at index " +
                                              std::to_string(i) + " is out of range");
        }
        const auto* p = images.bytes.data() + images.data_offset + i * pixels;
        out.push_back({QTensor({1, rows, cols}, fmt, std::vector<std::int64_t>(p, p + pixels)), label});
    }
    return out;
}

void write_idx(const std::string& images_path, const std::string& labels_path, const Dataset& data) {
    std::size_t rows = 0, cols = 0;
    if (!data.empty()) {
        const Shape& s = data.front().input.shape();
        if (s.size() == 3 && s[0] == 1) {
            rows = s[1];
            cols = s[2];
        } else if (s.size() == 2) {
            rows = s[0];
            cols = s[1];
        } else {
            fail(ErrorCode::ShapeError, "IDX images need a [1, rows, cols] or [rows, cols] shape");
        }
    }
    std::vector<std::uint8_t> img, lab;
    put_be32(img, 0x00000803);
    put_be32(img, static_cast<std::uint32_t>(data.size()));
    put_be32(img, static_cast<std::uint32_t>(rows));
    put_be32(img, static_cast<std::uint32_t>(cols));
    put_be32(lab, 0x00000801);
    put_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (const auto& s : data) {
        if (s.input.size() != rows * cols) fail(ErrorCode::ShapeError, "IDX samples must share one shape");
        for (auto v : s.input.raw()) {
            if (v < 0 || v > 255) fail(ErrorCode::InvalidValue, "IDX pixels must be bytes");
            img.push_back(static_cast<std::uint8_t>(v));
        }
        if (s.label > 255) fail(ErrorCode::InvalidLabel, "IDX labels must be bytes");
        lab.push_back(static_cast<std::uint8_t>(s.label));
    }
    write_bytes(images_path, img);
    write_bytes(labels_path, lab);
}

}  // namespace qaibp::io
