// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "qaibp/train/shadow.hpp"
#include "qaibp/train/trainer.hpp"

namespace qaibp::io {

inline constexpr int checkpoint_version = 1;

/// Shadow parameters, optimizer moments, phase and step, plus the training
/// configuration they belong to. Parameters are stored as base64 of
/// little-endian float64, so a restored state continues bit-identically.
std::string checkpoint_to_json(const train::TrainState& state, const train::TrainConfig& config);

struct Checkpoint {
    train::TrainState state;
    train::TrainConfig config;
};
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const train::TrainState& state, const train::TrainConfig& config);
Checkpoint load_checkpoint(const std::string& path);

/// Canonical JSON of the fields that determine a training trajectory.
std::string config_fingerprint(const train::TrainConfig& config);

/// Shadow network on its own, in the checkpoint encoding.
std::string shadow_to_json(const train::ShadowNetwork& net);
train::ShadowNetwork shadow_from_json(const std::string& text);

}  // namespace qaibp::io
