// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qaibp/dataset.hpp"
#include "qaibp/ibp.hpp"
#include "qaibp/network.hpp"

namespace qaibp::train {
struct ShadowNetwork;
class PreparedNetwork;
}  // namespace qaibp::train

namespace qaibp::verify {

using ibp::RawBox;

/// Number of grid points in a box, saturating at UINT64_MAX.
std::uint64_t box_points(const RawBox& box);
bool is_singleton(const RawBox& box);

/// Splits the widest dimension (smallest index on ties) at
/// lo + floor((hi - lo) / 2) into [lo, mid] and [mid + 1, hi].
std::pair<RawBox, RawBox> split(const RawBox& box);
std::pair<ibp::IntervalTensor, ibp::IntervalTensor> split(const ibp::IntervalTensor& region);

/// Ball of radius eps around x intersected with the input range.
RawBox input_box(const QNetwork& net, const QTensor& x, std::int64_t eps);

struct PgdConfig {
    int steps = 20;
    double step_fraction = 0.25;  // step size as a fraction of the box half-width
    int restarts = 2;
};

/// Gradient-sign attack on the float shadow of an exact network. Candidates
/// are rounded to the input grid and accepted only after an exact forward.
class Attacker {
public:
    explicit Attacker(const QNetwork& net);
    ~Attacker();
    Attacker(const Attacker&) = delete;
    Attacker& operator=(const Attacker&) = delete;

    /// A grid point inside `box` with classify != label, or nothing.
    std::optional<std::vector<std::int64_t>> attack(const RawBox& box, std::size_t label, const PgdConfig& cfg,
                                                    std::mt19937_64& rng) const;

    /// False when the network has layers the shadow cannot represent; the
    /// attack then falls back to random grid sampling.
    bool has_gradients() const noexcept { return prepared_ != nullptr; }

private:
    std::vector<double> gradient(std::span<const double> z, std::size_t label) const;

    const QNetwork* net_;
    std::unique_ptr<train::ShadowNetwork> shadow_;
    std::unique_ptr<train::PreparedNetwork> prepared_;
};

std::optional<QTensor> pgd_attack(const QNetwork& net, const ibp::IntervalTensor& region, std::size_t original_class,
                                  const PgdConfig& cfg, std::uint64_t seed = 0);

enum class SearchOrder { Lifo, Fifo };

struct VerifyConfig {
    std::optional<double> timeout_seconds = 20.0;  // per sample; nullopt disables
    PgdConfig pgd;
    SearchOrder order = SearchOrder::Lifo;
    bool elide_last_layer = true;
    std::optional<std::uint64_t> region_budget;  // per sample; exhausting it gives Undecided
    std::size_t workers = 1;
    /// Replaces the wall-clock timeout by a region budget (default
    /// deterministic_budget) so that verdicts do not depend on machine speed.
    bool deterministic = false;
    std::uint64_t seed = 0;

    static constexpr std::uint64_t deterministic_budget = 10000;

    void validate() const;
    std::optional<double> effective_timeout() const;
    std::optional<std::uint64_t> effective_budget() const;
};

enum class Verdict { Robust, Vulnerable, Undecided };
std::string verdict_name(Verdict verdict);

struct VerifyStats {
    std::uint64_t regions_processed = 0;
    std::uint64_t splits = 0;
    std::uint64_t pgd_calls = 0;
    double wall_time = 0.0;  // seconds
};

struct VerifyResult {
    Verdict verdict = Verdict::Undecided;
    std::optional<QTensor> witness;
    std::size_t predicted_class = 0;
    VerifyStats stats;

    static VerifyResult robust(std::size_t predicted, VerifyStats stats);
    static VerifyResult undecided(std::size_t predicted, VerifyStats stats);
    /// Throws InvalidValue unless the witness lies in the eps-ball of x and
    /// classifies differently from x under exact semantics.
    static VerifyResult vulnerable(const QNetwork& net, const QTensor& x, std::int64_t eps, QTensor witness,
                                   VerifyStats stats);
};

/// Instrumentation hook. `pending` is the work list after the region was
/// handled; certified regions (including robust singletons) are reported
/// with action Certified.
struct SearchEvent {
    enum class Action { Certified, Falsified, Split };
    Action action;
    const RawBox& region;
    std::span<const RawBox> pending;
};
using SearchObserver = std::function<void(const SearchEvent&)>;

/// Reusable verifier for one network; safe to share across threads.
class Verifier {
public:
    Verifier(const QNetwork& net, VerifyConfig cfg);

    const QNetwork& network() const noexcept { return *net_; }
    const VerifyConfig& config() const noexcept { return cfg_; }

    VerifyResult verify(const QTensor& x, std::int64_t eps, std::uint64_t seed,
                        const SearchObserver& observer = {}) const;
    VerifyResult verify_baseline(const QTensor& x, std::int64_t eps, std::uint64_t seed) const;

private:
    bool certified(const RawBox& box, std::size_t label) const;

    const QNetwork* net_;
    VerifyConfig cfg_;
    Attacker attacker_;
    bool elide_;
};

VerifyResult verify(const QNetwork& net, const QTensor& x, std::int64_t eps, const VerifyConfig& cfg = {});
VerifyResult verify_baseline(const QNetwork& net, const QTensor& x, std::int64_t eps, const VerifyConfig& cfg = {});

enum class Method { Full, Baseline };

struct SampleRecord {
    std::size_t index = 0;
    std::size_t label = 0;
    VerifyResult result;
};

struct CertifyReport {
    std::int64_t eps = 0;
    Method method = Method::Full;
    std::vector<SampleRecord> samples;
    std::size_t robust_count = 0;
    std::size_t vulnerable_count = 0;
    std::size_t undecided_count = 0;
    std::size_t correct_count = 0;            // clean accuracy numerator
    std::size_t certified_correct_count = 0;  // robust and correctly classified

    double certified_accuracy() const;
    double clean_accuracy() const;
};

/// Seed used for sample `index`; independent of scheduling.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

/// Verifies every sample, in parallel over cfg.workers threads. `progress`
/// is called once per finished sample, serialized.
CertifyReport certify_dataset(const QNetwork& net, const Dataset& data, std::int64_t eps, const VerifyConfig& cfg,
                              Method method = Method::Full,
                              const std::function<void(const SampleRecord&)>& progress = {});

}  // namespace qaibp::verify
