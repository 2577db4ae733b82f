// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>

#include "qaibp/io/checkpoint.hpp"
#include "qaibp/io/config.hpp"
#include "qaibp/io/idx.hpp"
#include "qaibp/io/model_file.hpp"
#include "qaibp/io/report.hpp"
#include "qaibp/verify/verify.hpp"
#include "selftest.hpp"

namespace qaibp::cli {

namespace {

std::int64_t parse_int(std::string_view text, const std::string& what) {
    while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
    while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    std::int64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
        fail(ErrorCode::InvalidValue, what + ": expected an integer, got '" + std::string(text) + "'");
    }
    return v;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
    f << text;
    if (!f.flush()) fail(ErrorCode::IoError, "failed writing " + path);
}

std::string fmt(double v) { return io::format_double(v); }

// ---- train

struct TrainArgs {
    std::string config;
    bool resume = false;
};

std::int64_t global_step(const train::TrainState& s, const train::TrainConfig& cfg) {
    switch (s.phase) {
    case train::Phase::Pretrain: return s.step;
    case train::Phase::Robust: return cfg.pretrain_steps + s.step;
    case train::Phase::Done: break;
    }
    return cfg.pretrain_steps + cfg.total_steps;
}

// Keeps the header and the rows logged before `step`, dropping rows that a
// resumed run will produce again.
void truncate_metrics(const std::string& path, std::int64_t step) {
    std::ifstream in(path);
    std::string kept = io::metrics_csv_header();
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (line.empty()) continue;
        if (parse_int(line.substr(0, line.find(',')), path) < step) kept += line + "\n";
    }
    write_text(path, kept);
}

bool same_structure(const train::ShadowNetwork& a, const train::ShadowNetwork& b) {
    if (a.layers.size() != b.layers.size() || a.input_shape != b.input_shape) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto &x = a.layers[i], &y = b.layers[i];
        if (x.kind != y.kind || x.output_shape != y.output_shape || x.weights.size() != y.weights.size() ||
            x.bias.size() != y.bias.size()) {
            return false;
        }
    }
    return true;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
    const io::TrainJob job = io::load_train_config(args.config);
    const auto& arch = job.architecture;
    io::IdxOptions idx;
    idx.input_format = arch.input_format;
    idx.class_count = arch.class_count;
    idx.limit = job.train_limit;
    const Dataset data = io::load_idx(job.train_images, job.train_labels, idx);
    if (!data.empty() && data.front().input.shape() != arch.input_shape) {
        fail(ErrorCode::ShapeError, "training images have shape " + shape_to_string(data.front().input.shape()) +
                                        " but input.shape is " + shape_to_string(arch.input_shape));
    }

    train::ShadowNetwork fresh = train::build_shadow(arch, job.config.seed);
    std::optional<train::TrainState> state;
    const bool resuming = args.resume && !job.checkpoint_path.empty() && std::filesystem::exists(job.checkpoint_path);
    if (resuming) {
        auto ck = io::load_checkpoint(job.checkpoint_path);
        if (io::config_fingerprint(ck.config) != io::config_fingerprint(job.config) ||
            !same_structure(ck.state.shadow, fresh)) {
            fail(ErrorCode::ConfigError,
                 "output.checkpoint: " + job.checkpoint_path + " was written for a different configuration");
        }
        state = std::move(ck.state);
        out << "resuming at " << train::phase_name(state->phase) << " step " << state->step << "\n";
        truncate_metrics(job.metrics_path, global_step(*state, job.config));
    } else {
        job.config.validate();
        state = train::initial_state(std::move(fresh), job.config);
        write_text(job.metrics_path, io::metrics_csv_header());
    }

    std::ofstream metrics(job.metrics_path, std::ios::app);
    if (!metrics) fail(ErrorCode::IoError, "cannot open " + job.metrics_path);
    train::TrainHooks hooks;
    hooks.on_metrics = [&](const train::MetricsRow& row) {
        metrics << io::metrics_csv_row(row) << std::flush;
        out << "step " << row.step << " " << train::phase_name(row.phase) << " loss " << fmt(row.loss) << " eps "
            << fmt(row.eps) << " clean " << fmt(row.clean_acc) << " certified " << fmt(row.certified_frac) << "\n"
            << std::flush;
    };
    if (!job.checkpoint_path.empty()) {
        hooks.checkpoint_every = job.checkpoint_every;
        hooks.on_checkpoint = [&](const train::TrainState& s) {
            io::save_checkpoint(job.checkpoint_path, s, job.config);
        };
    }
    const auto samples = train::to_train_samples(data, state->shadow);
    train::run_training(*state, samples, job.config, hooks);

    const auto exported = train::export_quantized(state->shadow);
    io::save_model(job.model_path, exported.network);
    std::size_t correct = 0;
    for (const auto& s : data) correct += classify(exported.network, s.input) == s.label;
    out << "model written to " << job.model_path << "\n";
    out << "saturated parameters " << exported.saturated_parameters << "\n";
    out << "training accuracy " << fmt(data.empty() ? 0.0 : static_cast<double>(correct) / data.size()) << " ("
        << correct << "/" << data.size() << ")\n";
    return exit_ok;
}

// ---- data for verify and eval

struct DataArgs {
    std::string model;
    std::string images;
    std::string labels;
    std::optional<std::size_t> limit;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
    cmd->add_option("--model", a.model, "model file")->required();
    cmd->add_option("--images", a.images, "IDX image file (optionally gzipped)")->required();
    cmd->add_option("--labels", a.labels, "IDX label file (optionally gzipped)")->required();
    cmd->add_option("--limit", a.limit, "use only the first N samples");
}

std::pair<QNetwork, Dataset> load_model_and_data(const DataArgs& a) {
    QNetwork net = io::load_model(a.model);
    io::IdxOptions idx;
    idx.input_format = net.input_format();
    idx.class_count = net.class_count();
    idx.limit = a.limit;
    Dataset data = io::load_idx(a.images, a.labels, idx);
    if (!data.empty() && data.front().input.shape() != net.input_shape()) {
        fail(ErrorCode::ShapeError, "dataset images have shape " + shape_to_string(data.front().input.shape()) +
                                        " but the model expects " + shape_to_string(net.input_shape()));
    }
    return {std::move(net), std::move(data)};
}

// ---- verify

struct VerifyArgs {
    DataArgs data;
    std::int64_t eps = 0;
    double timeout = 20.0;
    bool baseline = false;
    std::optional<std::size_t> workers;
    bool deterministic = false;
    std::optional<std::uint64_t> budget;
    std::uint64_t seed = 0;
    int pgd_steps = 20;
    int pgd_restarts = 2;
    std::string report;
    bool verbose = false;
};

int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err) {
    if (args.eps < 0) fail(ErrorCode::InvalidValue, "--eps: must be nonnegative");
    const auto [net, data] = load_model_and_data(args.data);
    verify::VerifyConfig cfg;
    if (args.timeout > 0) {
        cfg.timeout_seconds = args.timeout;
    } else {
        cfg.timeout_seconds.reset();
    }
    cfg.deterministic = args.deterministic;
    cfg.region_budget = args.budget;
    cfg.workers = args.workers ? *args.workers : default_workers();
    cfg.seed = args.seed;
    cfg.pgd.steps = args.pgd_steps;
    cfg.pgd.restarts = args.pgd_restarts;
    cfg.validate();

    std::ostream& log = args.report.empty() ? err : out;
    std::function<void(const verify::SampleRecord&)> progress;
    if (args.verbose) {
        progress = [&](const verify::SampleRecord& r) {
            log << "sample " << r.index << " label " << r.label << " " << verify::verdict_name(r.result.verdict)
                << " regions " << r.result.stats.regions_processed << "\n"
                << std::flush;
        };
    }
    const auto method = args.baseline ? verify::Method::Baseline : verify::Method::Full;
    const auto report = verify::certify_dataset(net, data, args.eps, cfg, method, progress);
    const std::string json = io::report_to_json(report, !args.deterministic);
    if (args.report.empty()) {
        out << json;
    } else {
        write_text(args.report, json);
    }
    log << "samples " << report.samples.size() << ": robust " << report.robust_count << ", vulnerable "
        << report.vulnerable_count << ", undecided " << report.undecided_count << "\n";
    log << "clean accuracy " << fmt(report.clean_accuracy()) << "\n";
    log << "certified robust accuracy " << fmt(report.certified_accuracy()) << " at eps " << args.eps << "\n";
    if (report.undecided_count > 0) return exit_undecided;
    if (report.vulnerable_count > 0) return exit_vulnerable;
    return exit_ok;
}

// ---- eval

int cmd_eval(const DataArgs& args, std::ostream& out) {
    const auto [net, data] = load_model_and_data(args);
    std::size_t correct = 0;
    for (const auto& s : data) correct += classify(net, s.input) == s.label;
    const double acc = data.empty() ? 0.0 : static_cast<double>(correct) / data.size();
    out << "accuracy " << fmt(acc) << " (" << correct << "/" << data.size() << ")\n";
    return exit_ok;
}

// ---- construct

struct ConstructArgs {
    std::string points;
    std::int64_t eps = 0;
    int bits = 8;
    std::size_t classes = 0;
    std::string output;
    std::uint64_t budget = 1000000;
};

int cmd_construct(const ConstructArgs& args, std::ostream& out) {
    if (args.eps < 0) fail(ErrorCode::InvalidValue, "--eps: must be nonnegative");
    const auto d = parse_points(args.points, args.bits, args.classes);
    const QNetwork net = synth::construct_robust_qnn(d, args.eps);
    io::save_model(args.output, net);
    out << "model written to " << args.output << " (" << synth::hidden_units(net) << " hidden units)\n";
    const std::int64_t radius = synth::strict_radius(args.eps);
    std::size_t robust = 0, fitted = 0;
    for (const auto& p : d.points) {
        const QTensor x({1}, d.input_format(), {p.x});
        const bool fits = classify(net, x) == p.label;
        const auto r = synth::brute_force_verify(net, x, radius, args.budget);
        const bool ok = fits && r.verdict == verify::Verdict::Robust;
        fitted += fits;
        robust += ok;
        out << "x=" << p.x << " label=" << p.label << ": " << (ok ? "robust" : "NOT robust") << " within radius "
            << radius << " (" << r.points_checked << " points enumerated)\n";
    }
    const std::string tally = std::to_string(robust) + "/" + std::to_string(d.points.size());
    out << (robust == d.points.size() ? "ROBUST" : "NOT ROBUST") << " at " << tally << " points\n";
    if (args.eps == 0) out << "exact fit at " << fitted << "/" << d.points.size() << " points\n";
    return robust == d.points.size() ? exit_ok : exit_vulnerable;
}

// ---- selftest

int cmd_selftest(const SelftestOptions& opt, std::ostream& out) {
    bool all = true;
    run_selftest(opt, [&](const SelftestCheck& c) {
        all = all && c.failures == 0;
        out << (c.failures == 0 ? "PASS " : "FAIL ") << c.name << ": " << c.cases << " cases, " << c.failures
            << " failures\n"
            << std::flush;
    });
    return all ? exit_ok : exit_vulnerable;
}

}  // namespace

int exit_code(ErrorCode code) { return exit_error_base + static_cast<int>(code); }

std::size_t default_workers() {
    const char* env = std::getenv(workers_env);
    if (env == nullptr || *env == '\0') return 1;
    const std::string_view text(env);
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size() || v == 0) {
        fail(ErrorCode::ConfigError, std::string(workers_env) + ": expected a positive integer, got '" + env + "'");
    }
    return v;
}

synth::PointDataset1D parse_points(const std::string& spec, int bits, std::size_t class_count) {
    synth::PointDataset1D d;
    d.bits = bits;
    std::stringstream ss(spec);
    std::string item;
    std::size_t max_label = 0;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail(ErrorCode::InvalidValue, "points: expected x:label, got '" + item + "'");
        const std::int64_t x = parse_int(std::string_view(item).substr(0, colon), "points");
        const std::int64_t label = parse_int(std::string_view(item).substr(colon + 1), "points");
        if (label < 0) fail(ErrorCode::InvalidLabel, "points: negative label " + std::to_string(label));
        d.points.push_back({x, static_cast<std::size_t>(label)});
        max_label = std::max(max_label, static_cast<std::size_t>(label));
    }
    d.class_count = class_count > 0 ? class_count : std::max<std::size_t>(2, max_label + 1);
    d.validate();
    return d;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quantization-aware interval bound propagation: training, verification and construction of "
                 "quantized networks"};
    app.name("qaibp");
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a quantized network from a JSON config");
    train_cmd->add_option("config", train_args.config, "config file")->required();
    train_cmd->add_flag("--resume", train_args.resume, "continue from the configured checkpoint if it exists");

    VerifyArgs verify_args;
    auto* verify_cmd = app.add_subcommand("verify", "certify L-infinity robustness of every sample");
    add_data_options(verify_cmd, verify_args.data);
    verify_cmd->add_option("--eps", verify_args.eps, "radius in input raw units")->required();
    verify_cmd->add_option("--timeout", verify_args.timeout, "seconds per sample; 0 disables")->capture_default_str();
    verify_cmd->add_flag("--baseline", verify_args.baseline, "IBP plus PGD only, without splitting");
    verify_cmd->add_option("--workers", verify_args.workers,
                           std::string("worker threads (default from ") + workers_env + ", else 1)");
    verify_cmd->add_flag("--deterministic", verify_args.deterministic,
                         "region budget instead of wall-clock timeout; report without timings");
    verify_cmd->add_option("--budget", verify_args.budget, "regions per sample before giving up");
    verify_cmd->add_option("--seed", verify_args.seed, "attack seed")->capture_default_str();
    verify_cmd->add_option("--pgd-steps", verify_args.pgd_steps, "attack steps per start")->capture_default_str();
    verify_cmd->add_option("--pgd-restarts", verify_args.pgd_restarts, "random restarts")->capture_default_str();
    verify_cmd->add_option("--report", verify_args.report, "write the JSON report here instead of stdout");
    verify_cmd->add_flag("--verbose", verify_args.verbose, "log every sample");

    DataArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "clean accuracy under exact integer semantics");
    add_data_options(eval_cmd, eval_args);

    ConstructArgs construct_args;
    auto* construct_cmd = app.add_subcommand("construct", "build a provably robust network for 1-D points");
    construct_cmd->add_option("--points", construct_args.points, "comma-separated x:label pairs")->required();
    construct_cmd->add_option("--eps", construct_args.eps, "class separation radius in raw units")->required();
    construct_cmd->add_option("--bits", construct_args.bits, "input bit width")->capture_default_str();
    construct_cmd->add_option("--classes", construct_args.classes, "class count (default max label + 1)");
    construct_cmd->add_option("--output", construct_args.output, "model file to write")->required();
    construct_cmd->add_option("--budget", construct_args.budget, "enumeration budget per point")
        ->capture_default_str();

    SelftestOptions selftest_args;
    auto* selftest_cmd = app.add_subcommand("selftest", "cross-check the verifier against exhaustive enumeration");
    selftest_cmd->add_option("--cases", selftest_args.cases, "random networks per check")->capture_default_str();
    selftest_cmd->add_option("--seed", selftest_args.seed, "random seed")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error: UsageError: " << e.what() << "\n";
        return exit_usage;
    }

    try {
        if (*train_cmd) return cmd_train(train_args, out);
        if (*verify_cmd) return cmd_verify(verify_args, out, err);
        if (*eval_cmd) return cmd_eval(eval_args, out);
        if (*construct_cmd) return cmd_construct(construct_args, out);
        if (*selftest_cmd) return cmd_selftest(selftest_args, out);
    } catch (const Error& e) {
        err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        err << "error: InternalError: " << e.what() << "\n";
        return exit_internal;
    }
    return exit_usage;
}

}  // namespace qaibp::cli
