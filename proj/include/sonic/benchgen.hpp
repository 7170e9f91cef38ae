// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonic/transcript.hpp"

namespace sonic {

enum class TaskKind { CoreRes, Gsm8kVariant, StatusUpdating, ConstraintAccumulation, Coreference, NestedLogic, ScatteredAggregation };

const char* task_name(TaskKind kind);

struct BenchmarkSample {
    ChatTranscript conversation;
    std::string gold;
    // task, scenario, injection_turn, distractions, plus task-specific fields.
    nlohmann::json meta;
};

nlohmann::json to_json(const BenchmarkSample& s);
BenchmarkSample benchmark_sample_from_json(const nlohmann::json& j);

struct IntRange {
    int lo = 0;
    int hi = 0;
    bool operator==(const IntRange&) const = default;
};

struct GenSpec {
    std::uint64_t seed = 0;
    int count = 1;
    // Distraction (chitchat) turns per sample.
    IntRange distractions{4, 6};
    // Extra chitchat sentences appended to each message of a distraction turn.
    IntRange padding{0, 0};
    // Atomic facts per math sample.
    IntRange facts{2, 4};
    // CoreRes scenario names to draw from; empty means all.
    std::vector<std::string> scenarios;

    void validate() const;
};

GenSpec coreres_default_spec();     // 978 samples, 7 turns on average
GenSpec gsm8k_variant_default_spec();  // 1001 samples, about 14.5 turns on average
GenSpec training_default_spec();

std::vector<std::string> coreres_scenarios();

std::vector<BenchmarkSample> gen_coreres(const GenSpec& spec);
std::vector<BenchmarkSample> gen_gsm8k_variant(const GenSpec& spec);
// Round-robin over the five competencies.
std::vector<BenchmarkSample> gen_training_set(const GenSpec& spec);

// Every word any generator can emit, without the reserved tokens.
std::vector<std::string> benchmark_lexicon();
Vocabulary benchmark_vocabulary();

// Distraction turns shared by all generators.
const std::vector<Turn>& distraction_pool();

}  // namespace sonic
