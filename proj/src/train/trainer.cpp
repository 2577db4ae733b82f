// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "qaibp/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "qaibp/error.hpp"
#include "qaibp/train/loss.hpp"

namespace qaibp::train {

std::int64_t TrainConfig::schedule_start() const { return eps_start_step.value_or(total_steps / 10); }

std::int64_t TrainConfig::schedule_end() const { return eps_end_step.value_or(total_steps - total_steps / 10); }

void TrainConfig::validate() const {
    const auto require = [](bool ok, const char* field, const std::string& what) {
        if (!ok) fail(ErrorCode::ConfigError, std::string(field) + ": " + what);
    };
    require(learning_rate > 0 && std::isfinite(learning_rate), "learning_rate", "must be positive");
    require(weight_decay >= 0 && std::isfinite(weight_decay), "weight_decay", "must be nonnegative");
    require(pretrain_lr > 0 && std::isfinite(pretrain_lr), "pretrain_lr", "must be positive");
    require(batch_size > 0, "batch_size", "must be positive");
    require(total_steps >= 0, "total_steps", "must be nonnegative");
    require(pretrain_steps >= 0, "pretrain_steps", "must be nonnegative");
    require(eps_target >= 0 && std::isfinite(eps_target), "eps_target", "must be nonnegative");
    require(schedule_start() >= 0, "eps_schedule.start_step", "must be nonnegative");
    require(schedule_start() <= schedule_end(), "eps_schedule.end_step", "must not precede start_step");
    require(schedule_end() <= total_steps, "eps_schedule.end_step", "must not exceed total_steps");
    require(adam.beta1 >= 0 && adam.beta1 < 1, "optimizer.beta1", "must be in [0, 1)");
    require(adam.beta2 >= 0 && adam.beta2 < 1, "optimizer.beta2", "must be in [0, 1)");
    require(adam.epsilon > 0, "optimizer.epsilon", "must be positive");
    require(log_every > 0, "log_every", "must be positive");
}

double epsilon_schedule(std::int64_t step, const TrainConfig& config) {
    const std::int64_t start = config.schedule_start();
    const std::int64_t end = config.schedule_end();
    if (step < start) return 0.0;
    if (step >= end) return config.eps_target;
    return config.eps_target * static_cast<double>(step - start) / static_cast<double>(end - start);
}

std::vector<TrainSample> to_train_samples(const Dataset& data, const ShadowNetwork& net) {
    std::vector<TrainSample> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& s = data[i];
        if (s.input.shape() != net.input_shape || s.input.format() != net.input_format) {
            fail(ErrorCode::ShapeError, "sample " + std::to_string(i) + " does not match the network input " +
                                            shape_to_string(net.input_shape) + " " + net.input_format.to_string());
        }
        if (s.label >= net.class_count) {
            fail(ErrorCode::InvalidLabel, "sample " + std::to_string(i) + " has label " + std::to_string(s.label));
        }
        out.push_back({to_real(s.input), s.label});
    }
    return out;
}

namespace {

std::size_t argmax_smallest(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

void input_box(const ShadowNetwork& net, std::span<const double> x, double eps, std::vector<double>& lo,
               std::vector<double>& hi) {
    const int frac = net.input_format.frac_bits();
    const double e = std::ldexp(eps, -frac);
    const double vmin = std::ldexp(static_cast<double>(net.input_format.raw_min()), -frac);
    const double vmax = std::ldexp(static_cast<double>(net.input_format.raw_max()), -frac);
    lo.resize(x.size());
    hi.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        lo[i] = std::max(x[i] - e, vmin);
        hi[i] = std::min(x[i] + e, vmax);
    }
}

void require_nonempty(Batch batch) {
    if (batch.empty()) fail(ErrorCode::InvalidValue, "training batch is empty");
}

}  // namespace

double robust_loss_gradient(const ShadowNetwork& shadow, Batch batch, double eps, bool elide, Semantics semantics,
                            ParamGrads& grads) {
    require_nonempty(batch);
    grads = ParamGrads::like(shadow);
    const PreparedNetwork pnet(shadow, semantics);
    IntervalTape tape;
    std::vector<double> lo, hi, dm;
    double loss = 0.0;
    for (const TrainSample* s : batch) {
        input_box(shadow, s->input, eps, lo, hi);
        const auto fw = forward_interval(pnet, lo, hi, s->label, elide, &tape);
        dm.resize(fw.margins.size());
        loss += margin_loss(fw.margins, dm);
        backward_interval(pnet, tape, dm, grads);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    grads.scale(inv);
    pnet.apply_parameter_masks(grads);
    return loss * inv;
}

StepMetrics train_step(ShadowNetwork& shadow, AdamW& optimizer, Batch batch, double eps, const TrainConfig& config) {
    require_nonempty(batch);
    ParamGrads grads = ParamGrads::like(shadow);
    StepMetrics metrics;
    std::size_t certified = 0, correct = 0, saturated = 0, hidden = 0;
    {
        const PreparedNetwork pnet(shadow, Semantics::Quantized);
        IntervalTape tape;
        std::vector<double> lo, hi, dm;
        for (const TrainSample* s : batch) {
            input_box(shadow, s->input, eps, lo, hi);
            const auto fw = forward_interval(pnet, lo, hi, s->label, config.elide_last_layer, &tape);
            dm.resize(fw.margins.size());
            metrics.loss += margin_loss(fw.margins, dm);
            backward_interval(pnet, tape, dm, grads);
            if (std::all_of(fw.margins.begin(), fw.margins.end(), [](double m) { return m > 0; })) ++certified;
            saturated += fw.saturated_units;
            hidden += fw.hidden_units;
            const auto logits = forward_point(pnet, s->input);
            if (argmax_smallest(logits) == s->label) ++correct;
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        grads.scale(inv);
        pnet.apply_parameter_masks(grads);
        metrics.loss *= inv;
        metrics.certified_frac = static_cast<double>(certified) * inv;
        metrics.clean_acc = static_cast<double>(correct) * inv;
        metrics.saturated_frac = hidden ? static_cast<double>(saturated) / static_cast<double>(hidden) : 0.0;
    }
    optimizer.step(shadow, grads, config.learning_rate, config.weight_decay);
    return metrics;
}

StepMetrics pretrain_step(ShadowNetwork& shadow, AdamW& optimizer, Batch batch, const TrainConfig& config) {
    require_nonempty(batch);
    ParamGrads grads = ParamGrads::like(shadow);
    StepMetrics metrics;
    std::size_t correct = 0;
    {
        const PreparedNetwork pnet(shadow, Semantics::Quantized);
        PointTape tape;
        std::vector<double> dlogits;
        for (const TrainSample* s : batch) {
            const auto logits = forward_point(pnet, s->input, &tape);
            dlogits.resize(logits.size());
            metrics.loss += cross_entropy(logits, s->label, dlogits);
            backward_point(pnet, tape, dlogits, grads);
            if (argmax_smallest(logits) == s->label) ++correct;
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        grads.scale(inv);
        pnet.apply_parameter_masks(grads);
        metrics.loss *= inv;
        metrics.clean_acc = static_cast<double>(correct) * inv;
    }
    optimizer.step(shadow, grads, config.pretrain_lr, config.weight_decay);
    return metrics;
}

std::string phase_name(Phase phase) {
    switch (phase) {
    case Phase::Pretrain: return "pretrain";
    case Phase::Robust: return "qaibp";
    case Phase::Done: return "done";
    }
    return "done";
}

Phase parse_phase(const std::string& name) {
    if (name == "pretrain") return Phase::Pretrain;
    if (name == "qaibp") return Phase::Robust;
    if (name == "done") return Phase::Done;
    fail(ErrorCode::InvalidValue, "unknown training phase '" + name + "'");
}

TrainState initial_state(ShadowNetwork shadow, const TrainConfig& config) {
    TrainState st;
    st.optimizer = AdamW(shadow, config.adam);
    st.shadow = std::move(shadow);
    st.phase = Phase::Pretrain;
    return st;
}

namespace {

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, Phase phase, std::uint64_t epoch, std::size_t count) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(phase), static_cast<std::uint32_t>(epoch),
                      static_cast<std::uint32_t>(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

}  // namespace

std::vector<std::size_t> batch_indices(std::uint64_t seed, Phase phase, std::int64_t step, std::size_t batch_size,
                                       std::size_t count) {
    if (count == 0) fail(ErrorCode::InvalidValue, "training set is empty");
    std::vector<std::size_t> out(batch_size);
    std::uint64_t cached_epoch = ~std::uint64_t{0};
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < batch_size; ++i) {
        const std::uint64_t pos = static_cast<std::uint64_t>(step) * batch_size + i;
        const std::uint64_t epoch = pos / count;
        if (epoch != cached_epoch) {
            perm = epoch_permutation(seed, phase, epoch, count);
            cached_epoch = epoch;
        }
        out[i] = perm[pos % count];
    }
    return out;
}

void run_training(TrainState& state, const std::vector<TrainSample>& data, const TrainConfig& config,
                  const TrainHooks& hooks) {
    config.validate();
    if (data.empty()) fail(ErrorCode::InvalidValue, "training set is empty");
    std::vector<const TrainSample*> batch(config.batch_size);
    const auto fill_batch = [&](Phase phase, std::int64_t step) {
        const auto idx = batch_indices(config.seed, phase, step, config.batch_size, data.size());
        for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = &data[idx[i]];
    };
    const auto emit = [&](const MetricsRow& row) {
        if (hooks.on_metrics) hooks.on_metrics(row);
    };
    const auto maybe_checkpoint = [&] {
        if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && state.step % hooks.checkpoint_every == 0) {
            hooks.on_checkpoint(state);
        }
    };

    while (state.phase == Phase::Pretrain && state.step < config.pretrain_steps) {
        fill_batch(Phase::Pretrain, state.step);
        const auto m = pretrain_step(state.shadow, state.optimizer, batch, config);
        const std::int64_t done = state.step++;
        if (done % config.log_every == 0 || state.step == config.pretrain_steps) {
            emit({done, Phase::Pretrain, m.loss, 0.0, m.clean_acc, m.certified_frac, m.saturated_frac});
        }
        maybe_checkpoint();
    }
    if (state.phase == Phase::Pretrain) {
        state.phase = Phase::Robust;
        state.step = 0;
        state.optimizer = AdamW(state.shadow, config.adam);
    }
    while (state.phase == Phase::Robust && state.step < config.total_steps) {
        fill_batch(Phase::Robust, state.step);
        const double eps = epsilon_schedule(state.step, config);
        const auto m = train_step(state.shadow, state.optimizer, batch, eps, config);
        const std::int64_t done = state.step++;
        if (done % config.log_every == 0 || state.step == config.total_steps) {
            emit({config.pretrain_steps + done, Phase::Robust, m.loss, eps, m.clean_acc, m.certified_frac,
                  m.saturated_frac});
        }
        maybe_checkpoint();
    }
    if (state.phase == Phase::Robust) {
        state.phase = Phase::Done;
        state.step = 0;
        if (hooks.on_checkpoint) hooks.on_checkpoint(state);
    }
}

void pretrain(ShadowNetwork& shadow, const std::vector<TrainSample>& data, const TrainConfig& config,
              const TrainHooks& hooks) {
    TrainConfig cfg = config;
    cfg.total_steps = 0;
    cfg.eps_start_step.reset();
    cfg.eps_end_step.reset();
    TrainState state = initial_state(std::move(shadow), cfg);
    run_training(state, data, cfg, hooks);
    shadow = std::move(state.shadow);
}

TrainResult train(const Dataset& data, const ArchitectureSpec& architecture, const TrainConfig& config,
                  const TrainHooks& hooks) {
    config.validate();
    TrainState state = initial_state(build_shadow(architecture, config.seed), config);
    const auto samples = to_train_samples(data, state.shadow);
    std::vector<MetricsRow> rows;
    TrainHooks wrapped = hooks;
    wrapped.on_metrics = [&](const MetricsRow& row) {
        rows.push_back(row);
        if (hooks.on_metrics) hooks.on_metrics(row);
    };
    run_training(state, samples, config, wrapped);
    auto exported = export_quantized(state.shadow);
    return {std::move(exported.network), std::move(state.shadow), exported.saturated_parameters, std::move(rows)};
}

}  // namespace qaibp::train
