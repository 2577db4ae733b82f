// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/io/checkpoint.hpp"

#include <cstdio>

#include "codec.hpp"
#include "qaibp/error.hpp"

namespace qaibp::io {

using namespace detail;

namespace {

std::string shadow_kind_name(train::ShadowKind k) {
    switch (k) {
        case train::ShadowKind::Dense: return "dense";
        case train::ShadowKind::Conv2D: return "conv2d";
        case train::ShadowKind::Flatten: return "flatten";
    }
    return "flatten";
}

train::ShadowKind shadow_kind_from(const std::string& s, const std::string& path) {
    if (s == "dense") return train::ShadowKind::Dense;
    if (s == "conv2d") return train::ShadowKind::Conv2D;
    if (s == "flatten") return train::ShadowKind::Flatten;
    fail(ErrorCode::FormatError, path + ": unknown layer kind '" + s + "'");
}

std::string activation_name(ActivationKind k) {
    switch (k) {
        case ActivationKind::ReluN: return "relu_n";
        case ActivationKind::Identity: return "identity";
        case ActivationKind::Lookup: return "lookup";
    }
    return "identity";
}

ActivationKind activation_from(const std::string& s, const std::string& path) {
    if (s == "relu_n") return ActivationKind::ReluN;
    if (s == "identity") return ActivationKind::Identity;
    fail(ErrorCode::FormatError, path + ": unsupported activation '" + s + "'");
}

json shadow_json(const train::ShadowNetwork& net) {
    json j;
    j["input_shape"] = shape_to_json(net.input_shape);
    j["input_format"] = format_to_string(net.input_format);
    j["class_count"] = net.class_count;
    j["layers"] = json::array();
    for (const auto& l : net.layers) {
        json lj;
        lj["kind"] = shadow_kind_name(l.kind);
        lj["input_shape"] = shape_to_json(l.input_shape);
        lj["output_shape"] = shape_to_json(l.output_shape);
        if (l.kind == train::ShadowKind::Conv2D) {
            lj["filters"] = l.geometry.filters;
            lj["kernel"] = l.geometry.kernel;
            lj["stride"] = l.geometry.stride;
            lj["padding"] = l.geometry.padding == Padding::Same ? "same" : "valid";
        }
        lj["output_format"] = format_to_string(l.output_format);
        lj["input_frac"] = l.input_frac;
        lj["output_frac"] = l.output_frac;
        if (l.parametric()) {
            lj["weights"] = encode_f64(l.weights);
            lj["bias"] = encode_f64(l.bias);
            lj["weight_format"] = format_to_string(l.weight_format);
            lj["bias_format"] = format_to_string(l.bias_format);
            lj["bias_frac"] = l.bias_frac;
            lj["clamp_bits"] = l.clamp_bits;
            lj["activation"] = activation_name(l.activation);
        }
        j["layers"].push_back(std::move(lj));
    }
    return j;
}

train::ShadowNetwork shadow_parse(const json& j, const std::string& path) {
    train::ShadowNetwork net;
    net.input_shape = shape_from_json(member(j, "input_shape", path), path + ".input_shape");
    net.input_format = format_from_string(member(j, "input_format", path).get<std::string>());
    net.class_count = member(j, "class_count", path).get<std::size_t>();
    const auto& layers = member(j, "layers", path);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string lp = path + ".layers[" + std::to_string(i) + "]";
        const json& lj = layers[i];
        train::ShadowLayer l;
        l.kind = shadow_kind_from(member(lj, "kind", lp).get<std::string>(), lp + ".kind");
        l.input_shape = shape_from_json(member(lj, "input_shape", lp), lp + ".input_shape");
        l.output_shape = shape_from_json(member(lj, "output_shape", lp), lp + ".output_shape");
        if (l.kind == train::ShadowKind::Conv2D) {
            const std::string pad = member(lj, "padding", lp).get<std::string>();
            l.geometry = ConvGeometry::make(l.input_shape, member(lj, "filters", lp).get<std::size_t>(),
                                            member(lj, "kernel", lp).get<std::size_t>(),
                                            member(lj, "stride", lp).get<std::size_t>(),
                                            pad == "valid" ? Padding::Valid : Padding::Same);
            if (l.geometry.output_shape() != l.output_shape) {
                fail(ErrorCode::ShapeError, lp + ": convolution geometry does not match the output shape");
            }
        }
        l.output_format = format_from_string(member(lj, "output_format", lp).get<std::string>());
        l.input_frac = member(lj, "input_frac", lp).get<int>();
        l.output_frac = member(lj, "output_frac", lp).get<int>();
        if (l.parametric()) {
            l.weights = decode_f64(member(lj, "weights", lp).get<std::string>(), lp + ".weights");
            l.bias = decode_f64(member(lj, "bias", lp).get<std::string>(), lp + ".bias");
            l.weight_format = format_from_string(member(lj, "weight_format", lp).get<std::string>());
            l.bias_format = format_from_string(member(lj, "bias_format", lp).get<std::string>());
            l.bias_frac = member(lj, "bias_frac", lp).get<int>();
            l.clamp_bits = member(lj, "clamp_bits", lp).get<int>();
            l.activation = activation_from(member(lj, "activation", lp).get<std::string>(), lp + ".activation");
            const std::size_t expected_w = l.kind == train::ShadowKind::Dense
                                               ? l.input_size() * l.output_size()
                                               : l.geometry.filters * l.geometry.channels * l.geometry.kernel *
                                                     l.geometry.kernel;
            const std::size_t expected_b = l.kind == train::ShadowKind::Dense ? l.output_size() : l.geometry.filters;
            if (l.weights.size() != expected_w || l.bias.size() != expected_b) {
                fail(ErrorCode::ShapeError, lp + ": parameter count does not match the layer shape");
            }
        }
        net.layers.push_back(std::move(l));
    }
    return net;
}

json grads_json(const train::ParamGrads& g) {
    json j = json::array();
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        j.push_back({{"weights", encode_f64(g.weights[l])}, {"bias", encode_f64(g.bias[l])}});
    }
    return j;
}

train::ParamGrads grads_parse(const json& j, const std::string& path) {
    train::ParamGrads g;
    for (std::size_t l = 0; l < j.size(); ++l) {
        const std::string lp = path + "[" + std::to_string(l) + "]";
        g.weights.push_back(decode_f64(member(j[l], "weights", lp).get<std::string>(), lp + ".weights"));
        g.bias.push_back(decode_f64(member(j[l], "bias", lp).get<std::string>(), lp + ".bias"));
    }
    return g;
}

json config_json(const train::TrainConfig& c) {
    json j;
    j["learning_rate"] = c.learning_rate;
    j["weight_decay"] = c.weight_decay;
    j["batch_size"] = c.batch_size;
    j["total_steps"] = c.total_steps;
    j["pretrain_steps"] = c.pretrain_steps;
    j["pretrain_lr"] = c.pretrain_lr;
    j["eps_target"] = c.eps_target;
    j["eps_start_step"] = c.schedule_start();
    j["eps_end_step"] = c.schedule_end();
    j["beta1"] = c.adam.beta1;
    j["beta2"] = c.adam.beta2;
    j["adam_epsilon"] = c.adam.epsilon;
    j["seed"] = c.seed;
    j["elide_last_layer"] = c.elide_last_layer;
    j["log_every"] = c.log_every;
    return j;
}

train::TrainConfig config_parse(const json& j, const std::string& path) {
    train::TrainConfig c;
    c.learning_rate = member(j, "learning_rate", path).get<double>();
    c.weight_decay = member(j, "weight_decay", path).get<double>();
    c.batch_size = member(j, "batch_size", path).get<std::size_t>();
    c.total_steps = member(j, "total_steps", path).get<std::int64_t>();
    c.pretrain_steps = member(j, "pretrain_steps", path).get<std::int64_t>();
    c.pretrain_lr = member(j, "pretrain_lr", path).get<double>();
    c.eps_target = member(j, "eps_target", path).get<double>();
    c.eps_start_step = member(j, "eps_start_step", path).get<std::int64_t>();
    c.eps_end_step = member(j, "eps_end_step", path).get<std::int64_t>();
    c.adam.beta1 = member(j, "beta1", path).get<double>();
    c.adam.beta2 = member(j, "beta2", path).get<double>();
    c.adam.epsilon = member(j, "adam_epsilon", path).get<double>();
    c.seed = member(j, "seed", path).get<std::uint64_t>();
    c.elide_last_layer = member(j, "elide_last_layer", path).get<bool>();
    c.log_every = member(j, "log_every", path).get<std::int64_t>();
    return c;
}

}  // namespace

std::string config_fingerprint(const train::TrainConfig& config) { return config_json(config).dump(); }

std::string shadow_to_json(const train::ShadowNetwork& net) { return shadow_json(net).dump(1) + "\n"; }

train::ShadowNetwork shadow_from_json(const std::string& text) {
    try {
        return shadow_parse(json::parse(text), "shadow");
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("malformed shadow network: ") + e.what());
    }
}

std::string checkpoint_to_json(const train::TrainState& state, const train::TrainConfig& config) {
    json j;
    j["format"] = "qaibp-checkpoint";
    j["version"] = checkpoint_version;
    j["phase"] = train::phase_name(state.phase);
    j["step"] = state.step;
    j["config"] = config_json(config);
    j["shadow"] = shadow_json(state.shadow);
    j["optimizer"] = {{"steps", state.optimizer.steps()},
                      {"first_moment", grads_json(state.optimizer.first_moment())},
                      {"second_moment", grads_json(state.optimizer.second_moment())}};
    return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (member(j, "format", "checkpoint").get<std::string>() != "qaibp-checkpoint") {
            fail(ErrorCode::FormatError, "checkpoint.format: not a qaibp checkpoint");
        }
        const int version = member(j, "version", "checkpoint").get<int>();
        if (version != checkpoint_version) {
            fail(ErrorCode::VersionMismatch, "checkpoint.version: file has version " + std::to_string(version) +
                                                 ", expected " + std::to_string(checkpoint_version));
        }
        Checkpoint out;
        out.config = config_parse(member(j, "config", "checkpoint"), "checkpoint.config");
        out.state.shadow = shadow_parse(member(j, "shadow", "checkpoint"), "checkpoint.shadow");
        out.state.phase = train::parse_phase(member(j, "phase", "checkpoint").get<std::string>());
        out.state.step = member(j, "step", "checkpoint").get<std::int64_t>();
        const json& opt = member(j, "optimizer", "checkpoint");
        out.state.optimizer = train::AdamW(out.state.shadow, out.config.adam);
        out.state.optimizer.restore(out.state.shadow, member(opt, "steps", "checkpoint.optimizer").get<std::int64_t>(),
                                    grads_parse(member(opt, "first_moment", "checkpoint.optimizer"),
                                                "checkpoint.optimizer.first_moment"),
                                    grads_parse(member(opt, "second_moment", "checkpoint.optimizer"),
                                                "checkpoint.optimizer.second_moment"));
        return out;
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::string& path, const train::TrainState& state, const train::TrainConfig& config) {
    // Write-then-rename so an interrupted run never leaves a torn file.
    const std::string tmp = path + ".tmp";
    write_file(tmp, checkpoint_to_json(state, config));
    if (std::rename(tmp.c_str(), path.c_str()) != 0) fail(ErrorCode::IoError, "cannot move checkpoint to " + path);
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_file(path)); }

}  // namespace qaibp::io
