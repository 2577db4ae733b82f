// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qaibp/dataset.hpp"
#include "qaibp/network.hpp"
#include "qaibp/train/autodiff.hpp"
#include "qaibp/train/optimizer.hpp"
#include "qaibp/train/shadow.hpp"

namespace qaibp::train {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    std::size_t batch_size = 512;
    std::int64_t total_steps = 10000;
    std::int64_t pretrain_steps = 5000;
    double pretrain_lr = 5e-4;
    double eps_target = 4.0;  // input raw units
    /// Ramp bounds in robust-phase steps; unset means the middle 80%.
    std::optional<std::int64_t> eps_start_step;
    std::optional<std::int64_t> eps_end_step;
    AdamConfig adam;
    std::uint64_t seed = 0;
    bool elide_last_layer = true;
    std::int64_t log_every = 100;

    std::int64_t schedule_start() const;
    std::int64_t schedule_end() const;
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// 0 before the ramp, linear up to eps_target, constant afterwards.
double epsilon_schedule(std::int64_t step, const TrainConfig& config);

struct TrainSample {
    std::vector<double> input;  // real units
    std::size_t label = 0;
};

std::vector<TrainSample> to_train_samples(const Dataset& data, const ShadowNetwork& net);

struct StepMetrics {
    double loss = 0.0;
    double certified_frac = 0.0;
    double clean_acc = 0.0;
    double saturated_frac = 0.0;
};

using Batch = std::span<const TrainSample* const>;

/// Mean robust loss over the batch at radius eps (input raw units), its
/// gradient, one AdamW step at config.learning_rate.
StepMetrics train_step(ShadowNetwork& shadow, AdamW& optimizer, Batch batch, double eps, const TrainConfig& config);

/// Cross-entropy counterpart on the fake-quantized point forward, at
/// config.pretrain_lr.
StepMetrics pretrain_step(ShadowNetwork& shadow, AdamW& optimizer, Batch batch, const TrainConfig& config);

/// Gradient of the mean robust loss without updating anything. The
/// semantics switch exposes the smooth path used by finite-difference checks.
double robust_loss_gradient(const ShadowNetwork& shadow, Batch batch, double eps, bool elide, Semantics semantics,
                            ParamGrads& grads);

enum class Phase { Pretrain, Robust, Done };
std::string phase_name(Phase phase);
Phase parse_phase(const std::string& name);

struct TrainState {
    ShadowNetwork shadow;
    AdamW optimizer;
    Phase phase = Phase::Pretrain;
    std::int64_t step = 0;  // steps completed within the current phase
};

TrainState initial_state(ShadowNetwork shadow, const TrainConfig& config);

struct MetricsRow {
    std::int64_t step = 0;  // global: pretrain steps first, then robust steps
    Phase phase = Phase::Pretrain;
    double loss = 0.0;
    double eps = 0.0;
    double clean_acc = 0.0;
    double certified_frac = 0.0;
    double saturated_frac = 0.0;
};

struct TrainHooks {
    std::function<void(const MetricsRow&)> on_metrics;
    std::function<void(const TrainState&)> on_checkpoint;
    std::int64_t checkpoint_every = 0;  // steps; 0 disables periodic checkpoints
};

/// Indices of the samples used at `step` of `phase`: consecutive slices of a
/// per-epoch permutation derived from the seed.
std::vector<std::size_t> batch_indices(std::uint64_t seed, Phase phase, std::int64_t step, std::size_t batch_size,
                                       std::size_t count);

/// Continues from `state` until both phases are complete.
void run_training(TrainState& state, const std::vector<TrainSample>& data, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Cross-entropy phase only, with a fresh optimizer.
void pretrain(ShadowNetwork& shadow, const std::vector<TrainSample>& data, const TrainConfig& config,
              const TrainHooks& hooks = {});

struct TrainResult {
    QNetwork network;
    ShadowNetwork shadow;
    std::size_t saturated_parameters = 0;
    std::vector<MetricsRow> metrics;
};

TrainResult train(const Dataset& data, const ArchitectureSpec& architecture, const TrainConfig& config,
                  const TrainHooks& hooks = {});

}  // namespace qaibp::train
