// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/io/config.hpp"

#include <filesystem>
#include <set>

#include "codec.hpp"
#include "qaibp/error.hpp"

namespace qaibp::io {

using detail::json;

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& what) {
    fail(ErrorCode::ConfigError, path + ": " + what);
}

/// View of one JSON object that rejects unknown keys and reports paths.
class Section {
public:
    Section(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) config_error(path_, "expected an object");
        for (const auto& [key, _] : j.items()) {
            if (!allowed.count(key)) config_error(field(key), "unknown key");
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }
    const json& at(const std::string& key) const { return j_.at(key); }

    template <typename T>
    void read(const std::string& key, T& out) const {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) config_error(field(key), "expected a boolean");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) config_error(field(key), "expected a string");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) config_error(field(key), "expected a number");
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) config_error(field(key), "expected a nonnegative integer");
        } else {
            if (!v.is_number_integer()) config_error(field(key), "expected an integer");
        }
        out = v.get<T>();
    }

    template <typename T>
    void read(const std::string& key, std::optional<T>& out) const {
        if (!has(key)) return;
        T v{};
        read(key, v);
        out = v;
    }

private:
    const json& j_;
    std::string path_;
};

QFormat read_format(const Section& s, const std::string& key, bool is_signed, QFormat fallback) {
    if (!s.has(key)) return fallback;
    std::string text;
    s.read(key, text);
    try {
        if (!text.empty() && (text.back() == 's' || text.back() == 'u')) return detail::format_from_string(text);
        return QFormat::parse(text, is_signed);
    } catch (const Error& e) {
        config_error(s.field(key), e.what());
    }
}

train::LayerSpec read_layer(const json& j, const std::string& path) {
    const Section s(j, path, {"kind", "units", "filters", "kernel", "stride", "padding"});
    std::string kind;
    if (!s.has("kind")) config_error(s.field("kind"), "missing");
    s.read("kind", kind);
    train::LayerSpec l;
    if (kind == "conv") {
        l.kind = train::LayerSpec::Kind::Conv;
        if (!s.has("filters")) config_error(s.field("filters"), "missing");
        s.read("filters", l.units);
        s.read("kernel", l.kernel);
        s.read("stride", l.stride);
        std::string pad = "same";
        s.read("padding", pad);
        if (pad == "same") {
            l.padding = Padding::Same;
        } else if (pad == "valid") {
            l.padding = Padding::Valid;
        } else {
            config_error(s.field("padding"), "must be \"same\" or \"valid\"");
        }
        if (l.units == 0 || l.kernel == 0 || l.stride == 0) config_error(path, "conv sizes must be positive");
    } else if (kind == "dense") {
        l.kind = train::LayerSpec::Kind::Dense;
        if (!s.has("units")) config_error(s.field("units"), "missing");
        s.read("units", l.units);
        if (l.units == 0) config_error(s.field("units"), "must be positive");
    } else if (kind == "flatten") {
        l.kind = train::LayerSpec::Kind::Flatten;
    } else {
        config_error(s.field("kind"), "unknown layer kind '" + kind + "'");
    }
    return l;
}

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (std::filesystem::path(base) / path).lexically_normal().string();
}

}  // namespace

TrainJob parse_train_config(const std::string& text, const std::string& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
    }
    TrainJob job;
    const Section top(root, "", {"architecture", "formats", "input", "classes", "data", "training", "output"});

    if (top.has("input")) {
        const Section in(top.at("input"), "input", {"shape", "format"});
        if (in.has("shape")) {
            try {
                job.architecture.input_shape = detail::shape_from_json(in.at("shape"), "input.shape");
            } catch (const Error& e) {
                config_error("input.shape", e.what());
            }
        }
        job.architecture.input_format = read_format(in, "format", false, job.architecture.input_format);
    } else {
        job.architecture.input_shape = {1, 28, 28};
    }
    if (job.architecture.input_shape.empty()) job.architecture.input_shape = {1, 28, 28};
    top.read("classes", job.architecture.class_count);
    if (job.architecture.class_count < 1) config_error("classes", "must be positive");

    if (!top.has("architecture")) config_error("architecture", "missing");
    const json& arch = top.at("architecture");
    try {
        if (arch.is_string()) {
            job.architecture_name = arch.get<std::string>();
            job.architecture.hidden = train::preset_architecture(job.architecture_name);
        } else {
            const Section a(arch, "architecture", {"layers"});
            if (!a.has("layers") || !a.at("layers").is_array()) config_error("architecture.layers", "expected a list");
            const auto& layers = a.at("layers");
            for (std::size_t i = 0; i < layers.size(); ++i) {
                job.architecture.hidden.push_back(
                    read_layer(layers[i], "architecture.layers[" + std::to_string(i) + "]"));
            }
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError && std::string(e.what()).rfind("architecture", 0) == 0) throw;
        config_error("architecture", e.what());
    }

    if (top.has("formats")) {
        const json& f = top.at("formats");
        if (f.is_string()) {
            job.formats_name = f.get<std::string>();
            try {
                job.architecture.formats = train::preset_formats(job.formats_name);
            } catch (const Error& e) {
                config_error("formats", e.what());
            }
        } else {
            const Section fs(f, "formats", {"weights", "biases", "activations"});
            auto& fm = job.architecture.formats;
            fm.weight = read_format(fs, "weights", true, fm.weight);
            fm.bias = read_format(fs, "biases", true, fm.bias);
            fm.activation = read_format(fs, "activations", false, fm.activation);
        }
    } else {
        job.formats_name = "mnist-formats";
        job.architecture.formats = train::preset_formats(job.formats_name);
    }

    if (!top.has("data")) config_error("data", "missing");
    const Section data(top.at("data"), "data", {"train_images", "train_labels", "limit"});
    if (!data.has("train_images")) config_error("data.train_images", "missing");
    if (!data.has("train_labels")) config_error("data.train_labels", "missing");
    data.read("train_images", job.train_images);
    data.read("train_labels", job.train_labels);
    data.read("limit", job.train_limit);
    job.train_images = resolve(base_dir, job.train_images);
    job.train_labels = resolve(base_dir, job.train_labels);

    auto& c = job.config;
    if (top.has("training")) {
        const Section t(top.at("training"), "training",
                        {"learning_rate", "weight_decay", "batch_size", "total_steps", "pretrain_steps", "pretrain_lr",
                         "eps_target", "eps_schedule", "optimizer", "seed", "elide_last_layer", "log_every"});
        t.read("learning_rate", c.learning_rate);
        t.read("weight_decay", c.weight_decay);
        t.read("batch_size", c.batch_size);
        t.read("total_steps", c.total_steps);
        t.read("pretrain_steps", c.pretrain_steps);
        t.read("pretrain_lr", c.pretrain_lr);
        t.read("eps_target", c.eps_target);
        t.read("seed", c.seed);
        t.read("elide_last_layer", c.elide_last_layer);
        t.read("log_every", c.log_every);
        if (t.has("eps_schedule")) {
            const Section e(t.at("eps_schedule"), "training.eps_schedule", {"start_step", "end_step"});
            e.read("start_step", c.eps_start_step);
            e.read("end_step", c.eps_end_step);
        }
        if (t.has("optimizer")) {
            const Section o(t.at("optimizer"), "training.optimizer", {"beta1", "beta2", "epsilon"});
            o.read("beta1", c.adam.beta1);
            o.read("beta2", c.adam.beta2);
            o.read("epsilon", c.adam.epsilon);
        }
    }
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, "training." + std::string(e.what()));
    }

    if (top.has("output")) {
        const Section o(top.at("output"), "output", {"model", "metrics", "checkpoint", "checkpoint_every"});
        o.read("model", job.model_path);
        o.read("metrics", job.metrics_path);
        o.read("checkpoint", job.checkpoint_path);
        o.read("checkpoint_every", job.checkpoint_every);
        if (job.checkpoint_every < 0) config_error("output.checkpoint_every", "must be nonnegative");
    }
    job.model_path = resolve(base_dir, job.model_path);
    job.metrics_path = resolve(base_dir, job.metrics_path);
    job.checkpoint_path = resolve(base_dir, job.checkpoint_path);
    return job;
}

TrainJob load_train_config(const std::string& path) {
    const std::string dir = std::filesystem::path(path).parent_path().string();
    return parse_train_config(detail::read_file(path), dir.empty() ? "." : dir);
}

}  // namespace qaibp::io
