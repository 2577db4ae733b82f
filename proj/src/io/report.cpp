// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/io/report.hpp"

#include <array>
#include <charconv>

#include "codec.hpp"
#include "qaibp/error.hpp"

namespace qaibp::io {

using detail::json;

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::string metrics_csv_header() {
    return "step,phase,loss,eps,clean_acc,certified_frac,saturated_neuron_frac\n";
}

std::string metrics_csv_row(const train::MetricsRow& r) {
    return std::to_string(r.step) + "," + train::phase_name(r.phase) + "," + format_double(r.loss) + "," +
           format_double(r.eps) + "," + format_double(r.clean_acc) + "," + format_double(r.certified_frac) + "," +
           format_double(r.saturated_frac) + "\n";
}

std::string report_to_json(const verify::CertifyReport& report, bool include_timing) {
    json j;
    j["format"] = "qaibp-report";
    j["version"] = 1;
    j["eps"] = report.eps;
    j["method"] = report.method == verify::Method::Full ? "branch-and-bound" : "baseline";
    j["summary"] = {{"samples", report.samples.size()},
                    {"robust", report.robust_count},
                    {"vulnerable", report.vulnerable_count},
                    {"undecided", report.undecided_count},
                    {"correct", report.correct_count},
                    {"certified_correct", report.certified_correct_count},
                    {"certified_accuracy", report.certified_accuracy()},
                    {"clean_accuracy", report.clean_accuracy()}};
    json samples = json::array();
    for (const auto& rec : report.samples) {
        const auto& r = rec.result;
        json s{{"index", rec.index},
               {"label", rec.label},
               {"predicted", r.predicted_class},
               {"verdict", verify::verdict_name(r.verdict)},
               {"regions_processed", r.stats.regions_processed},
               {"splits", r.stats.splits},
               {"pgd_calls", r.stats.pgd_calls}};
        if (r.witness) s["witness"] = std::vector<std::int64_t>(r.witness->raw().begin(), r.witness->raw().end());
        if (include_timing) s["wall_time"] = r.stats.wall_time;
        samples.push_back(std::move(s));
    }
    j["samples"] = std::move(samples);
    return j.dump(1) + "\n";
}

double ReportSummary::certified_accuracy() const {
    return samples == 0 ? 0.0 : static_cast<double>(certified_correct) / static_cast<double>(samples);
}

double ReportSummary::clean_accuracy() const {
    return samples == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(samples);
}

ReportSummary summarize_report(const std::string& report_json) {
    try {
        const json j = json::parse(report_json);
        ReportSummary s;
        for (const auto& rec : detail::member(j, "samples", "report")) {
            ++s.samples;
            const auto verdict = rec.at("verdict").get<std::string>();
            const bool correct = rec.at("predicted").get<std::size_t>() == rec.at("label").get<std::size_t>();
            if (verdict == "robust") {
                ++s.robust;
            } else if (verdict == "vulnerable") {
                ++s.vulnerable;
            } else {
                ++s.undecided;
            }
            if (correct) {
                ++s.correct;
                if (verdict == "robust") ++s.certified_correct;
            }
        }
        return s;
    } catch (const json::exception& e) {
        fail(ErrorCode::FormatError, std::string("malformed report: ") + e.what());
    }
}

}  // namespace qaibp::io
