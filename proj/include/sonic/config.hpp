// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "sonic/losses.hpp"
#include "sonic/net.hpp"
#include "sonic/trainer.hpp"

namespace sonic {

struct PathsConfig {
    std::string data;
    std::string out = "runs/latest";
    // Vocabulary file; empty means the built-in benchmark vocabulary.
    std::string vocab;
    std::string checkpoint;
    bool operator==(const PathsConfig&) const = default;
};

// Top-level experiment manifest. `seed` drives both model initialization and
// the trainer RNG; the model and train blocks therefore carry no seed of their own.
struct GlobalConfig {
    ModelConfig model;
    NexusConfig nexus;
    LossWeights loss;
    TrainConfig train;
    PathsConfig paths;
    std::uint64_t seed = 0;

    void validate() const;
    ModelConfig effective_model() const;
    TrainConfig effective_train() const;
    bool operator==(const GlobalConfig&) const = default;
};

nlohmann::json to_json(const GlobalConfig& c);
// Unknown keys are schema violations.
GlobalConfig global_config_from_json(const nlohmann::json& j);
GlobalConfig load_global_config(const std::filesystem::path& path);

Vocabulary load_vocabulary(const PathsConfig& paths);

}  // namespace sonic
