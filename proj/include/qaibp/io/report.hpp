// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "qaibp/train/trainer.hpp"
#include "qaibp/verify/verify.hpp"

namespace qaibp::io {

/// step,phase,loss,eps,clean_acc,certified_frac,saturated_neuron_frac
std::string metrics_csv_header();
std::string metrics_csv_row(const train::MetricsRow& row);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Schema-stable JSON with one record per sample. Timing fields are left
/// out when `include_timing` is false so that reruns compare byte-equal.
std::string report_to_json(const verify::CertifyReport& report, bool include_timing);

struct ReportSummary {
    std::size_t samples = 0;
    std::size_t robust = 0;
    std::size_t vulnerable = 0;
    std::size_t undecided = 0;
    std::size_t correct = 0;
    std::size_t certified_correct = 0;

    double certified_accuracy() const;
    double clean_accuracy() const;
    friend bool operator==(const ReportSummary&, const ReportSummary&) = default;
};

/// Recomputes the aggregate numbers from the per-sample records of a report.
ReportSummary summarize_report(const std::string& report_json);

}  // namespace qaibp::io
