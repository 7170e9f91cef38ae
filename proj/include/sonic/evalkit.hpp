// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonic/benchgen.hpp"
#include "sonic/cache.hpp"
#include "sonic/net.hpp"

namespace sonic {

// Case-folded, punctuation-free comparison. A numeric gold must appear as a
// whole numeric token of the prediction; other golds as a contiguous run of words.
bool score_exact(const std::string& prediction, const std::string& gold);

struct SampleResult {
    std::string prediction;
    std::string gold;
    bool correct = false;
    std::optional<SimReport> accounting;
};

struct EvalReport {
    std::vector<SampleResult> samples;
    std::size_t correct = 0;
    // Null when the dataset is empty.
    std::optional<double> accuracy;
    nlohmann::json config;
};

nlohmann::json to_json(const EvalReport& r);

class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::string predict(const BenchmarkSample& sample) = 0;
    virtual std::optional<SimReport> accounting(const BenchmarkSample&) { return std::nullopt; }
};

// Returns the gold answer verbatim.
class OraclePredictor : public Predictor {
public:
    std::string predict(const BenchmarkSample& sample) override { return sample.gold; }
};

EvalReport evaluate(std::span<const BenchmarkSample> samples, Predictor& predictor);

struct DecodeOptions {
    int max_new_tokens = 32;
    // Generation stops after emitting this token; -1 disables.
    int stop_token = -1;
};

// Student path: Nexus-compressed history, incremental-inference mask.
std::vector<int> decode_student(const ModelParams& params, const SegmentedConversation& conv, int budget,
                                const NexusConfig& nexus, const DecodeOptions& options);

// Standard path over the plain sequence; query and generated rows cannot see `evicted`.
std::vector<int> decode_teacher(const ModelParams& params, const SegmentedConversation& conv,
                                const std::set<std::size_t>& evicted, const DecodeOptions& options);

struct EvalConfig {
    EvictionPolicy policy;
    std::optional<int> budget;
    std::optional<double> ratio;
    int max_new_tokens = 32;
};

nlohmann::json to_json(const EvalConfig& c);

// Greedy decoding under the chosen cache policy; SONIC decodes with the
// student, the other policies with the standard branch over their retained set.
EvalReport run_eval(const Checkpoint& checkpoint, const Vocabulary& vocab, std::span<const BenchmarkSample> samples,
                    const EvalConfig& config);

// Toy retrieval accuracy: over every query position of every conversation, the
// fraction where the student's greedy next token at `budget` equals the
// full-context teacher's.
double teacher_agreement(const ModelParams& params, const NexusConfig& nexus, std::span<const SegmentedConversation> data,
                         int budget);

}  // namespace sonic
