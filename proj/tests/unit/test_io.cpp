// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "qaibp/error.hpp"
#include "qaibp/io/checkpoint.hpp"
#include "qaibp/io/config.hpp"
#include "qaibp/io/idx.hpp"
#include "qaibp/io/model_file.hpp"
#include "qaibp/io/report.hpp"

using namespace qaibp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("qaibp-io-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidValue;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

Dataset random_images(std::mt19937_64& rng, std::size_t n, std::size_t rows, std::size_t cols) {
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        d.push_back({test::random_tensor(rng, {1, rows, cols}, QFormat::unsigned_bits(8, 8)),
                     static_cast<std::size_t>(test::uniform(rng, 0, 9))});
    }
    return d;
}

std::string minimal_config(const std::string& training = "{}") {
    return R"({"architecture": "small-conv", "formats": "mnist-formats",
               "data": {"train_images": "imgs.gz", "train_labels": "labs.gz"},
               "training": )" +
           training + "}";
}

}  // namespace

TEST_CASE("model files round-trip bit-exactly") {
    std::mt19937_64 rng(181);
    for (int it = 0; it < 60; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 0;
        opt.lookup = it % 3 == 0;
        opt.input_bits = static_cast<int>(test::uniform(rng, 2, 8));
        const Shape in = opt.conv ? Shape{2, 5, 4} : Shape{6};
        const QNetwork net = test::random_network(rng, in, {4, 3}, 3, opt);
        const std::string text = io::model_to_json(net);
        const QNetwork back = io::model_from_json(text);
        REQUIRE(back == net);
        REQUIRE(io::model_to_json(back) == text);
    }
    TempDir dir;
    std::mt19937_64 r2(3);
    const QNetwork net = test::random_network(r2, {3}, {2}, 2, {});
    io::save_model(dir / "m.json", net);
    CHECK(io::load_model(dir / "m.json") == net);
    CHECK(code_of([&] { io::load_model(dir / "missing.json"); }) == ErrorCode::IoError);

    std::string text = io::model_to_json(net);
    const auto at = text.find("\"version\": 1");
    REQUIRE(at != std::string::npos);
    std::string bumped = text;
    bumped.replace(at, 12, "\"version\": 9");
    CHECK(code_of([&] { io::model_from_json(bumped); }) == ErrorCode::VersionMismatch);
    CHECK(code_of([&] { io::model_from_json("{not json"); }) == ErrorCode::FormatError);
    CHECK(code_of([&] { io::model_from_json(R"({"format": "qaibp-model", "version": 1})"); }) ==
          ErrorCode::FormatError);
}

TEST_CASE("idx files round-trip and report errors") {
    TempDir dir;
    std::mt19937_64 rng(191);
    const Dataset data = random_images(rng, 25, 4, 3);
    for (const std::string ext : {"", ".gz"}) {
        io::write_idx(dir / ("img" + ext), dir / ("lab" + ext), data);
        const Dataset back = io::load_idx(dir / ("img" + ext), dir / ("lab" + ext));
        REQUIRE(back.size() == data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            CHECK(back[i].input == data[i].input);
            CHECK(back[i].label == data[i].label);
        }
    }
    io::IdxOptions limited;
    limited.limit = 7;
    CHECK(io::load_idx(dir / "img", dir / "lab", limited).size() == 7);

    Dataset seven = data;
    seven[0].label = 7;
    io::write_idx(dir / "img7", dir / "lab7", seven);
    CHECK(io::load_idx(dir / "img7", dir / "lab7")[0].label == 7);

    // truncated image file
    const auto size = fs::file_size(dir / "img");
    fs::copy_file(dir / "img", dir / "short");
    fs::resize_file(dir / "short", size - 5);
    CHECK(code_of([&] { io::load_idx(dir / "short", dir / "lab"); }) == ErrorCode::TruncatedFile);
    CHECK(message_of([&] { io::load_idx(dir / "short", dir / "lab"); }).find(std::to_string(size - 5)) !=
          std::string::npos);
    fs::resize_file(dir / "short", 6);
    CHECK(code_of([&] { io::load_idx(dir / "short", dir / "lab"); }) == ErrorCode::TruncatedFile);

    // swapped files fail the magic check
    CHECK(code_of([&] { io::load_idx(dir / "lab", dir / "img"); }) == ErrorCode::CorruptHeader);

    Dataset fewer(data.begin(), data.begin() + 10);
    io::write_idx(dir / "img10", dir / "lab10", fewer);
    CHECK(code_of([&] { io::load_idx(dir / "img", dir / "lab10"); }) == ErrorCode::CountMismatch);

    Dataset bad_label = fewer;
    bad_label[2].label = 12;
    io::write_idx(dir / "imgb", dir / "labb", bad_label);
    CHECK(code_of([&] { io::load_idx(dir / "imgb", dir / "labb"); }) == ErrorCode::InvalidLabel);

    io::IdxOptions signed_fmt;
    signed_fmt.input_format = QFormat::signed_bits(8);
    CHECK(code_of([&] { io::load_idx(dir / "img", dir / "lab", signed_fmt); }) == ErrorCode::FormatError);
    CHECK(code_of([&] { io::load_idx(dir / "nope", dir / "lab"); }) == ErrorCode::IoError);
}

TEST_CASE("bundled mnist subset") {
    const std::string root = QAIBP_DATA_DIR "/mnist-subset/";
    const Dataset train = io::load_idx(root + "train/images-idx3-ubyte.gz", root + "train/labels-idx1-ubyte.gz");
    const Dataset test = io::load_idx(root + "test/images-idx3-ubyte.gz", root + "test/labels-idx1-ubyte.gz");
    CHECK(train.size() == 3000);
    CHECK(test.size() == 2000);
    CHECK(train[0].input.shape() == Shape{1, 28, 28});
    std::vector<std::size_t> counts(10, 0);
    for (const auto& s : test) ++counts[s.label];
    for (auto c : counts) CHECK(c == 200);
}

TEST_CASE("train config presets and validation") {
    const auto job = io::parse_train_config(R"({"architecture": "fashion-arch", "formats": "mnist-formats",
        "data": {"train_images": "a", "train_labels": "b"}})",
                                            "/tmp/x");
    CHECK(job.train_images == "/tmp/x/a");
    const auto shadow = train::build_shadow(job.architecture, 0);
    // Conv(64,5,2)-Conv(96,3,1)-Conv(128,3,2)-FC(128)-FC(10)
    std::vector<std::pair<train::ShadowKind, std::size_t>> kinds;
    for (const auto& l : shadow.layers) {
        if (l.kind == train::ShadowKind::Conv2D) {
            kinds.emplace_back(l.kind, l.geometry.filters);
            CHECK(l.geometry.kernel == (kinds.size() == 1 ? 5u : 3u));
        } else if (l.kind == train::ShadowKind::Dense) {
            kinds.emplace_back(l.kind, l.output_size());
        }
    }
    using K = train::ShadowKind;
    CHECK(kinds == std::vector<std::pair<K, std::size_t>>{
                       {K::Conv2D, 64}, {K::Conv2D, 96}, {K::Conv2D, 128}, {K::Dense, 128}, {K::Dense, 10}});
    CHECK(shadow.layers[0].geometry.stride == 2);
    CHECK(shadow.layers[1].geometry.stride == 1);
    CHECK(shadow.layers[2].geometry.stride == 2);

    const auto& f = job.architecture.formats;
    CHECK(f.activation == QFormat::parse("Q3.5", false));
    CHECK(f.bias == QFormat::parse("Q5.3", true));
    CHECK(f.weight == QFormat::parse("Q2.6", true));

    const auto custom = io::parse_train_config(R"({"architecture": {"layers": [{"kind": "dense", "units": 7}]},
        "formats": {"activations": "Q4.4"}, "input": {"shape": [2], "format": "Q8.0"}, "classes": 2,
        "data": {"train_images": "/abs/a", "train_labels": "b"},
        "training": {"total_steps": 20, "eps_schedule": {"start_step": 2, "end_step": 10}, "seed": 5}})");
    CHECK(custom.architecture.hidden.size() == 1);
    CHECK(custom.architecture.input_shape == Shape{2});
    CHECK(custom.architecture.formats.activation == QFormat::parse("Q4.4", false));
    CHECK(custom.config.schedule_end() == 10);
    CHECK(custom.train_images == "/abs/a");
    CHECK(custom.config.seed == 5);

    const auto error_path = [](const std::string& text) {
        try {
            io::parse_train_config(text);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ConfigError);
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(error_path(minimal_config(R"({"learning_rate": 0})")).rfind("training.learning_rate", 0) == 0);
    CHECK(error_path(minimal_config(R"({"learning_rate": -1e-3})")).rfind("training.learning_rate", 0) == 0);
    CHECK(error_path(minimal_config(R"({"batch_sizes": 3})")).rfind("training.batch_sizes", 0) == 0);
    CHECK(error_path(minimal_config(R"({"batch_size": "big"})")).rfind("training.batch_size", 0) == 0);
    CHECK(error_path(minimal_config(R"({"optimizer": {"beta1": 1.5}})")).rfind("training.optimizer.beta1", 0) == 0);
    CHECK(error_path(minimal_config(R"({"eps_schedule": {"start_step": 9000, "end_step": 100}})"))
              .rfind("training.eps_schedule", 0) == 0);
    CHECK(error_path(R"({"architecture": "nope", "data": {"train_images": "a", "train_labels": "b"}})")
              .rfind("architecture", 0) == 0);
    CHECK(error_path(R"({"architecture": "mlp", "data": {"train_images": "a"}})").rfind("data.train_labels", 0) ==
          0);
    CHECK(error_path("[1, 2").find("JSON") != std::string::npos);
}

TEST_CASE("checkpoints restore the exact training state") {
    std::mt19937_64 rng(193);
    train::ArchitectureSpec spec;
    spec.input_shape = {1, 5, 5};
    spec.hidden = {{train::LayerSpec::Kind::Conv, 2, 3, 2}, {train::LayerSpec::Kind::Flatten},
                   {train::LayerSpec::Kind::Dense, 6}};
    spec.class_count = 3;
    Dataset data;
    for (int i = 0; i < 40; ++i) {
        data.push_back({test::random_tensor(rng, {1, 5, 5}, spec.input_format),
                        static_cast<std::size_t>(test::uniform(rng, 0, 2))});
    }
    train::TrainConfig cfg;
    cfg.pretrain_steps = 6;
    cfg.total_steps = 6;
    cfg.batch_size = 8;
    cfg.seed = 11;
    const auto init = train::build_shadow(spec, cfg.seed);
    const auto samples = train::to_train_samples(data, init);

    train::TrainState full = train::initial_state(init, cfg);
    train::run_training(full, samples, cfg);

    train::TrainState part = train::initial_state(init, cfg);
    std::string saved;
    train::TrainHooks hooks;
    hooks.checkpoint_every = 1;
    int seen = 0;
    hooks.on_checkpoint = [&](const train::TrainState& s) {
        if (++seen == 8) saved = io::checkpoint_to_json(s, cfg);
    };
    train::run_training(part, samples, cfg, hooks);
    REQUIRE(!saved.empty());
    auto restored = io::checkpoint_from_json(saved);
    CHECK(io::checkpoint_to_json(restored.state, restored.config) == saved);
    CHECK(io::config_fingerprint(restored.config) == io::config_fingerprint(cfg));
    CHECK(restored.state.phase == train::Phase::Robust);
    train::run_training(restored.state, samples, restored.config);
    CHECK(io::checkpoint_to_json(restored.state, cfg) == io::checkpoint_to_json(full, cfg));
    CHECK(train::export_quantized(restored.state.shadow).network == train::export_quantized(full.shadow).network);

    TempDir dir;
    io::save_checkpoint(dir / "c.json", full, cfg);
    CHECK(io::checkpoint_to_json(io::load_checkpoint(dir / "c.json").state, cfg) == io::checkpoint_to_json(full, cfg));
    CHECK(io::shadow_from_json(io::shadow_to_json(full.shadow)).layers[0].weights == full.shadow.layers[0].weights);
    CHECK(code_of([&] { io::checkpoint_from_json(R"({"format": "qaibp-model"})"); }) == ErrorCode::FormatError);
}

TEST_CASE("reports and metrics") {
    verify::CertifyReport rep;
    rep.eps = 1;
    const QTensor w({1}, QFormat::unsigned_bits(8), {4});
    rep.samples = {{0, 1, {verify::Verdict::Robust, std::nullopt, 1, {}}},
                   {1, 0, {verify::Verdict::Vulnerable, w, 0, {}}},
                   {2, 2, {verify::Verdict::Undecided, std::nullopt, 1, {}}},
                   {3, 1, {verify::Verdict::Robust, std::nullopt, 0, {}}}};
    rep.robust_count = 2;
    rep.vulnerable_count = 1;
    rep.undecided_count = 1;
    rep.correct_count = 2;
    rep.certified_correct_count = 1;
    const std::string text = io::report_to_json(rep, false);
    CHECK(text.find("wall_time") == std::string::npos);
    CHECK(io::report_to_json(rep, true).find("wall_time") != std::string::npos);
    const auto s = io::summarize_report(text);
    CHECK(s == io::summarize_report(text));
    CHECK(s.samples == 4);
    CHECK(s.robust == rep.robust_count);
    CHECK(s.vulnerable == rep.vulnerable_count);
    CHECK(s.undecided == rep.undecided_count);
    CHECK(s.correct == rep.correct_count);
    CHECK(s.certified_correct == rep.certified_correct_count);
    CHECK(s.certified_accuracy() == rep.certified_accuracy());

    CHECK(io::metrics_csv_header() == "step,phase,loss,eps,clean_acc,certified_frac,saturated_neuron_frac\n");
    const train::MetricsRow row{12, train::Phase::Robust, 0.5, 1.25, 1.0, 0.75, 0.1};
    CHECK(io::metrics_csv_row(row) == "12,qaibp,0.5,1.25,1,0.75,0.1\n");
    CHECK(std::stod(io::format_double(0.1 + 0.2)) == 0.1 + 0.2);
}
