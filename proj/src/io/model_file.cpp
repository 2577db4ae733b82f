// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/io/model_file.hpp"

#include "codec.hpp"
#include "qaibp/error.hpp"

namespace qaibp::io {

using namespace detail;

namespace {

json tensor_to_json(const QTensor& t) {
    return {{"shape", shape_to_json(t.shape())},
            {"format", format_to_string(t.format())},
            {"data", encode_i64({t.raw().begin(), t.raw().end()})}};
}

QTensor tensor_from_json(const json& j, const std::string& path) {
    const Shape shape = shape_from_json(member(j, "shape", path), path + ".shape");
    const QFormat f = format_from_string(member(j, "format", path).get<std::string>());
    auto data = decode_i64(member(j, "data", path).get<std::string>(), path + ".data");
    if (data.size() != shape_size(shape)) fail(ErrorCode::ShapeError, path + ": data does not match shape");
    return QTensor(shape, f, std::move(data));
}

json activation_to_json(const Activation& a) {
    switch (a.kind()) {
        case ActivationKind::ReluN: return {{"kind", "relu_n"}};
        case ActivationKind::Identity: return {{"kind", "identity"}};
        case ActivationKind::Lookup: return {{"kind", "lookup"}, {"table", encode_i64(a.table())}};
    }
    return {};
}

Activation activation_from_json(const json& j, const std::string& path) {
    const auto kind = member(j, "kind", path).get<std::string>();
    if (kind == "relu_n") return Activation::relu_n();
    if (kind == "identity") return Activation::identity();
    if (kind == "lookup") {
        return Activation::lookup(decode_i64(member(j, "table", path).get<std::string>(), path + ".table"));
    }
    fail(ErrorCode::FormatError, path + ".kind: unknown activation '" + kind + "'");
}

std::string padding_name(Padding p) { return p == Padding::Same ? "same" : "valid"; }

Padding padding_from(const std::string& s, const std::string& path) {
    if (s == "same") return Padding::Same;
    if (s == "valid") return Padding::Valid;
    fail(ErrorCode::FormatError, path + ": unknown padding '" + s + "'");
}

json layer_to_json(const Layer& l) {
    json j;
    j["input_shape"] = shape_to_json(l.input_shape());
    j["input_format"] = format_to_string(l.input_format());
    switch (l.kind()) {
        case Layer::Kind::Flatten:
            j["kind"] = "flatten";
            return j;
        case Layer::Kind::Dense: j["kind"] = "dense"; break;
        case Layer::Kind::Conv2D:
            j["kind"] = "conv2d";
            j["stride"] = l.geometry().stride;
            j["padding"] = padding_name(l.geometry().padding);
            break;
    }
    j["weights"] = tensor_to_json(l.weights());
    j["bias"] = tensor_to_json(l.bias());
    j["rescale_shift"] = l.rescale_shift();
    j["clamp_bits"] = l.clamp_bits();
    j["activation"] = activation_to_json(l.activation());
    j["output_format"] = format_to_string(l.output_format());
    return j;
}

Layer layer_from_json(const json& j, const std::string& path) {
    const auto kind = member(j, "kind", path).get<std::string>();
    const Shape in_shape = shape_from_json(member(j, "input_shape", path), path + ".input_shape");
    const QFormat in_format = format_from_string(member(j, "input_format", path).get<std::string>());
    if (kind == "flatten") return Layer::flatten(in_shape, in_format);
    QTensor w = tensor_from_json(member(j, "weights", path), path + ".weights");
    QTensor b = tensor_from_json(member(j, "bias", path), path + ".bias");
    const int shift = member(j, "rescale_shift", path).get<int>();
    const int clamp = member(j, "clamp_bits", path).get<int>();
    const Activation act = activation_from_json(member(j, "activation", path), path + ".activation");
    const QFormat out = format_from_string(member(j, "output_format", path).get<std::string>());
    if (kind == "dense") {
        if (w.shape().size() != 2 || w.shape()[1] != shape_size(in_shape)) {
            fail(ErrorCode::ShapeError, path + ": dense weights do not match the input shape");
        }
        return Layer::dense(std::move(w), std::move(b), in_format, shift, clamp, act, out);
    }
    if (kind == "conv2d") {
        const auto stride = member(j, "stride", path).get<std::size_t>();
        const Padding pad = padding_from(member(j, "padding", path).get<std::string>(), path + ".padding");
        return Layer::conv2d(std::move(w), std::move(b), in_shape, stride, pad, in_format, shift, clamp, act, out);
    }
    fail(ErrorCode::FormatError, path + ".kind: unknown layer kind '" + kind + "'");
}

}  // namespace

std::string model_to_json(const QNetwork& net) {
    json j;
    j["format"] = "qaibp-model";
    j["version"] = model_file_version;
    j["input_shape"] = shape_to_json(net.input_shape());
    j["input_format"] = format_to_string(net.input_format());
    j["class_count"] = net.class_count();
    j["layers"] = json::array();
    for (const auto& l : net.layers()) j["layers"].push_back(layer_to_json(l));
    return j.dump(1) + "\n";
}

QNetwork model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (member(j, "format", "model").get<std::string>() != "qaibp-model") {
            fail(ErrorCode::FormatError, "model.format: not a qaibp model");
        }
        const int version = member(j, "version", "model").get<int>();
        if (version != model_file_version) {
            fail(ErrorCode::VersionMismatch, "model.version: file has version " + std::to_string(version) +
                                                 ", expected " + std::to_string(model_file_version));
        }
        std::vector<Layer> layers;
        const auto& arr = member(j, "layers", "model");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            layers.push_back(layer_from_json(arr[i], "model.layers[" + std::to_string(i) + "]"));
        }
        return QNetwork(shape_from_json(member(j, "input_shape", "model"), "model.input_shape"),
                        format_from_string(member(j, "input_format", "model").get<std::string>()), std::move(layers),
                        member(j, "class_count", "model").get<std::size_t>());
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("model file has a malformed field: ") + e.what());
    }
}

void save_model(const std::string& path, const QNetwork& net) { write_file(path, model_to_json(net)); }

QNetwork load_model(const std::string& path) { return model_from_json(read_file(path)); }

}  // namespace qaibp::io
