// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include "qaibp/error.hpp"
#include "qaibp/verify/verify.hpp"

namespace qaibp::verify {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool can_elide(const QNetwork& net) {
    return !net.layers().empty() && net.layers().back().kind() == Layer::Kind::Dense;
}

}  // namespace

void VerifyConfig::validate() const {
    const auto require = [](bool ok, const char* field, const std::string& what) {
        if (!ok) fail(ErrorCode::ConfigError, std::string(field) + ": " + what);
    };
    require(!timeout_seconds || (*timeout_seconds > 0 && std::isfinite(*timeout_seconds)), "timeout",
            "must be positive");
    require(pgd.steps >= 1, "pgd.steps", "must be at least 1");
    require(pgd.restarts >= 0, "pgd.restarts", "must be nonnegative");
    require(pgd.step_fraction > 0 && std::isfinite(pgd.step_fraction), "pgd.step_fraction", "must be positive");
    require(!region_budget || *region_budget >= 1, "region_budget", "must be at least 1");
    require(workers >= 1, "workers", "must be at least 1");
}

std::optional<double> VerifyConfig::effective_timeout() const {
    return deterministic ? std::nullopt : timeout_seconds;
}

std::optional<std::uint64_t> VerifyConfig::effective_budget() const {
    if (deterministic && !region_budget) return deterministic_budget;
    return region_budget;
}

std::string verdict_name(Verdict verdict) {
    switch (verdict) {
        case Verdict::Robust: return "robust";
        case Verdict::Vulnerable: return "vulnerable";
        case Verdict::Undecided: return "undecided";
    }
    return "undecided";
}

VerifyResult VerifyResult::robust(std::size_t predicted, VerifyStats stats) {
    return {Verdict::Robust, std::nullopt, predicted, stats};
}

VerifyResult VerifyResult::undecided(std::size_t predicted, VerifyStats stats) {
    return {Verdict::Undecided, std::nullopt, predicted, stats};
}

VerifyResult VerifyResult::vulnerable(const QNetwork& net, const QTensor& x, std::int64_t eps, QTensor witness,
                                      VerifyStats stats) {
    check_input(net, witness);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::abs(witness[i] - x[i]) > eps) fail(ErrorCode::InvalidValue, "witness lies outside the eps-ball");
    }
    const std::size_t predicted = classify(net, x);
    if (classify(net, witness) == predicted) fail(ErrorCode::InvalidValue, "witness is classified like the input");
    return {Verdict::Vulnerable, std::move(witness), predicted, stats};
}

Verifier::Verifier(const QNetwork& net, VerifyConfig cfg)
    : net_(&net), cfg_(std::move(cfg)), attacker_(net), elide_(cfg_.elide_last_layer && can_elide(net)) {
    cfg_.validate();
}

bool Verifier::certified(const RawBox& box, std::size_t label) const {
    RawBox out = box;
    RawBox penultimate;
    ibp::propagate_raw(*net_, out, elide_ ? &penultimate : nullptr);
    // Ties resolve to the smallest index, so a competitor after the label
    // only has to be matched, not beaten.
    std::size_t k = 0;
    if (elide_) {
        const auto margins = ibp::margin_lower_bounds_raw(net_->layers().back(), penultimate, out, label);
        for (std::size_t j = 0; j < out.lo.size(); ++j) {
            if (j == label) continue;
            const std::int64_t m = margins[k++];
            if (m < 0 || (m == 0 && j < label)) return false;
        }
        return true;
    }
    for (std::size_t j = 0; j < out.lo.size(); ++j) {
        if (j == label) continue;
        const std::int64_t m = out.lo[label] - out.hi[j];
        if (m < 0 || (m == 0 && j < label)) return false;
    }
    return true;
}

VerifyResult Verifier::verify(const QTensor& x, std::int64_t eps, std::uint64_t seed,
                              const SearchObserver& observer) const {
    const auto start = Clock::now();
    const RawBox ball = input_box(*net_, x, eps);
    const std::size_t label = classify(*net_, x);
    const auto timeout = cfg_.effective_timeout();
    const auto budget = cfg_.effective_budget();
    std::mt19937_64 rng(seed);
    VerifyStats stats;
    std::deque<RawBox> work{ball};
    std::vector<RawBox> snapshot;
    const auto notify = [&](SearchEvent::Action action, const RawBox& region) {
        if (!observer) return;
        snapshot.assign(work.begin(), work.end());
        observer(SearchEvent{action, region, snapshot});
    };
    const auto finish = [&] {
        stats.wall_time = seconds_since(start);
        return stats;
    };
    while (!work.empty()) {
        if (stats.regions_processed > 0) {
            if ((timeout && seconds_since(start) > *timeout) || (budget && stats.regions_processed >= *budget)) {
                return VerifyResult::undecided(label, finish());
            }
        }
        RawBox box;
        if (cfg_.order == SearchOrder::Lifo) {
            box = std::move(work.back());
            work.pop_back();
        } else {
            box = std::move(work.front());
            work.pop_front();
        }
        ++stats.regions_processed;
        if (certified(box, label)) {
            notify(SearchEvent::Action::Certified, box);
            continue;
        }
        ++stats.pgd_calls;
        auto witness = attacker_.attack(box, label, cfg_.pgd, rng);
        if (!witness && is_singleton(box)) {
            if (classify_raw(*net_, box.lo) == label) {
                notify(SearchEvent::Action::Certified, box);
                continue;
            }
            witness = box.lo;
        }
        if (witness) {
            notify(SearchEvent::Action::Falsified, box);
            return VerifyResult::vulnerable(*net_, x, eps, QTensor(x.shape(), x.format(), std::move(*witness)),
                                            finish());
        }
        auto [lower, upper] = split(box);
        ++stats.splits;
        if (cfg_.order == SearchOrder::Lifo) {
            work.push_back(std::move(upper));
            work.push_back(std::move(lower));
        } else {
            work.push_back(std::move(lower));
            work.push_back(std::move(upper));
        }
        notify(SearchEvent::Action::Split, box);
    }
    return VerifyResult::robust(label, finish());
}

VerifyResult Verifier::verify_baseline(const QTensor& x, std::int64_t eps, std::uint64_t seed) const {
    const auto start = Clock::now();
    const RawBox ball = input_box(*net_, x, eps);
    const std::size_t label = classify(*net_, x);
    std::mt19937_64 rng(seed);
    VerifyStats stats;
    stats.regions_processed = 1;
    const auto finish = [&] {
        stats.wall_time = seconds_since(start);
        return stats;
    };
    if (certified(ball, label)) return VerifyResult::robust(label, finish());
    ++stats.pgd_calls;
    auto witness = attacker_.attack(ball, label, cfg_.pgd, rng);
    if (!witness && is_singleton(ball)) {
        if (classify_raw(*net_, ball.lo) == label) return VerifyResult::robust(label, finish());
        witness = ball.lo;
    }
    if (witness) {
        return VerifyResult::vulnerable(*net_, x, eps, QTensor(x.shape(), x.format(), std::move(*witness)), finish());
    }
    return VerifyResult::undecided(label, finish());
}

VerifyResult verify(const QNetwork& net, const QTensor& x, std::int64_t eps, const VerifyConfig& cfg) {
    return Verifier(net, cfg).verify(x, eps, cfg.seed);
}

VerifyResult verify_baseline(const QNetwork& net, const QTensor& x, std::int64_t eps, const VerifyConfig& cfg) {
    return Verifier(net, cfg).verify_baseline(x, eps, cfg.seed);
}

double CertifyReport::certified_accuracy() const {
    return samples.empty() ? 0.0 : static_cast<double>(certified_correct_count) / static_cast<double>(samples.size());
}

double CertifyReport::clean_accuracy() const {
    return samples.empty() ? 0.0 : static_cast<double>(correct_count) / static_cast<double>(samples.size());
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(std::uint64_t{index} >> 32)};
    std::mt19937_64 rng(seq);
    return rng();
}

CertifyReport certify_dataset(const QNetwork& net, const Dataset& data, std::int64_t eps, const VerifyConfig& cfg,
                              Method method, const std::function<void(const SampleRecord&)>& progress) {
    if (eps < 0) fail(ErrorCode::InvalidValue, "epsilon must be nonnegative");
    const Verifier verifier(net, cfg);
    CertifyReport report;
    report.eps = eps;
    report.method = method;
    report.samples.resize(data.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex mutex;
    const auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= data.size() || failed.load()) return;
            try {
                const auto& s = data[i];
                if (s.label >= net.class_count()) {
                    fail(ErrorCode::InvalidLabel, "sample " + std::to_string(i) + " has label " +
                                                      std::to_string(s.label));
                }
                const std::uint64_t seed = sample_seed(cfg.seed, i);
                SampleRecord rec{i, s.label,
                                 method == Method::Full ? verifier.verify(s.input, eps, seed)
                                                        : verifier.verify_baseline(s.input, eps, seed)};
                std::lock_guard lock(mutex);
                report.samples[i] = rec;
                if (progress) progress(rec);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!error) error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    const std::size_t threads = std::min(cfg.workers, std::max<std::size_t>(data.size(), 1));
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    for (const auto& rec : report.samples) {
        const auto& r = rec.result;
        switch (r.verdict) {
            case Verdict::Robust: ++report.robust_count; break;
            case Verdict::Vulnerable: ++report.vulnerable_count; break;
            case Verdict::Undecided: ++report.undecided_count; break;
        }
        if (r.predicted_class == rec.label) {
            ++report.correct_count;
            if (r.verdict == Verdict::Robust) ++report.certified_correct_count;
        }
    }
    return report;
}

}  // namespace qaibp::verify
