// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonic/losses.hpp"
#include "sonic/net.hpp"

namespace sonic {

enum class Optimizer { Sgd, Momentum };

struct TrainConfig {
    std::uint64_t seed = 0;
    int steps = 200;
    int batch = 4;
    double learning_rate = 0.05;
    Optimizer optimizer = Optimizer::Sgd;
    double momentum = 0.9;
    NexusConfig nexus;
    LossWeights weights;
    std::string data;
    // Steps between checkpoints; 0 writes only the final one.
    int checkpoint_every = 0;
    // Budgets sampled during training; empty means nexus.k_set.
    std::vector<int> budget_set;
    // Record per-component gradient norms in each step report (extra backward passes).
    bool grad_norms = false;

    void validate() const;
    const std::vector<int>& budgets() const { return budget_set.empty() ? nexus.k_set : budget_set; }
    bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainState {
    int step = 0;
    ModelParams params;
    // Momentum buffers keyed by tensor name.
    std::map<std::string, Matrix> moments;
    double running_total = 0.0;
    std::mt19937_64 rng;
};

TrainState init_train_state(ModelParams params, const TrainConfig& config);

// Uniform over `budgets`; throws ConfigError when it is empty.
int sample_budget(std::mt19937_64& rng, std::span<const int> budgets);

// h * K <= B.
bool feasible_budget(std::size_t segments, int budget, std::size_t capacity);

// A conversation with its teacher pass precomputed; the teacher is the frozen
// standard branch of the same parameters, so it never changes during training.
struct TrainItem {
    SegmentedConversation conversation;
    AugmentedSequence teacher_sequence;
    std::shared_ptr<ForwardTrace> teacher;
};

std::vector<TrainItem> prepare_items(const ModelParams& params, std::span<const SegmentedConversation> data);

struct StepReport {
    int step = 0;
    int budget = 0;
    LossReport loss;
};

nlohmann::json to_json(const StepReport& r);

// Worker count from SONIC_LAB_THREADS (0 or unset means hardware concurrency).
int worker_threads();

// One update on the batch: a single budget, per-item forwards, fixed-order mean
// of the gradients, and an optimizer step on the Nexus-related tensors only.
StepReport train_step(TrainState& state, std::span<const TrainItem* const> batch, const TrainConfig& config);

// Per-item loss without an update.
StepLosses evaluate_losses(const ModelParams& params, const TrainItem& item, int budget, const LossWeights& weights,
                           ForwardTrace& student);

struct TrainRun {
    TrainState state;
    std::vector<StepReport> log;
};

using StepCallback = std::function<void(const StepReport&, const TrainState&)>;

// Batches are drawn uniformly with replacement from `items` by the state RNG.
TrainRun train(ModelParams params, std::span<const TrainItem> items, const TrainConfig& config,
               const StepCallback& on_step = {});

}  // namespace sonic
