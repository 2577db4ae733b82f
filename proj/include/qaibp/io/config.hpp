// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "qaibp/train/shadow.hpp"
#include "qaibp/train/trainer.hpp"

namespace qaibp::io {

/// Everything `train` needs, read from a JSON config file. Relative paths
/// are resolved against the directory of the config file.
struct TrainJob {
    std::string architecture_name = "custom";
    std::string formats_name = "custom";
    train::ArchitectureSpec architecture;
    train::TrainConfig config;

    std::string train_images;
    std::string train_labels;
    std::optional<std::size_t> train_limit;

    std::string model_path = "model.json";
    std::string metrics_path = "metrics.csv";
    std::string checkpoint_path;  // empty disables checkpoints
    std::int64_t checkpoint_every = 0;
};

/// Throws ConfigError naming the offending field path (e.g.
/// "training.learning_rate") for unknown keys, wrong types and invalid values.
TrainJob parse_train_config(const std::string& text, const std::string& base_dir = ".");
TrainJob load_train_config(const std::string& path);

}  // namespace qaibp::io
