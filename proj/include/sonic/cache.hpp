// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonic/mask.hpp"
#include "sonic/matrix.hpp"
#include "sonic/net.hpp"

namespace sonic {

enum class PolicyKind { Full, Sonic, SinkWindow, AccumAttention };

const char* policy_name(PolicyKind kind);
// Accepts "full", "sonic", "sink_window", "accum_attention" and the alias "h2o_like".
PolicyKind parse_policy(const std::string& name);

struct EvictionPolicy {
    PolicyKind kind = PolicyKind::Sonic;
    int sink = 4;
    int window = 100;
    int keep = 256;

    void validate() const;
};

// Bytes per cached position: layers x heads x head_dim x 2 (key and value) x width.
struct CostModel {
    int layers = 2;
    int heads = 4;
    int head_dim = 8;
    int value_width = 8;

    std::size_t bytes_per_position() const;
};

CostModel cost_model_for(const ModelConfig& config);

struct LedgerEntry {
    PositionTag tag;
    bool resident = true;
    std::size_t appended_at = 0;
    // Clock of the eviction, when evicted.
    std::optional<std::size_t> evicted_at;
};

struct EvictionEvent {
    std::size_t clock = 0;
    std::size_t position = 0;
};

// Residency record of one replayed sequence. Position p is appended at clock p.
class KVLedger {
public:
    std::size_t append(const PositionTag& tag);
    void evict(std::size_t position);
    // Clock of the next append.
    std::size_t clock() const { return entries_.size(); }

    const std::vector<LedgerEntry>& entries() const { return entries_; }
    const std::vector<EvictionEvent>& events() const { return events_; }
    std::size_t resident_count() const { return resident_; }
    std::size_t evicted_count() const { return events_.size(); }
    std::vector<std::size_t> resident_positions() const;
    // Body and Nexus positions: the history part of the cache.
    std::size_t history_total() const;
    std::size_t history_resident() const;
    std::size_t body_total() const;

private:
    std::vector<LedgerEntry> entries_;
    std::vector<EvictionEvent> events_;
    std::size_t resident_ = 0;
};

struct SimRequest {
    EvictionPolicy policy;
    // Sonic: exactly one of budget / ratio. Baselines: ratio optionally sizes the retained history.
    std::optional<int> budget;
    std::optional<double> ratio;
    NexusConfig nexus;
    CostModel cost;
};

struct SimReport {
    std::string policy;
    int budget = 0;
    std::optional<double> requested_ratio;
    bool ratio_unreachable = false;
    std::size_t length = 0;
    std::size_t original_history = 0;
    std::size_t retained_history = 0;
    std::size_t peak_resident = 0;
    std::size_t peak_bytes = 0;
    // Cache entries read by the first decode step of the final turn.
    std::size_t attended_at_decode = 0;
    double compression_ratio = 0.0;
    std::size_t evictions = 0;
};

nlohmann::json to_json(const SimReport& r);

struct SimResult {
    AugmentedSequence sequence;
    KVLedger ledger;
    SimReport report;
};

// 1 - retained/original over history; 0 without history.
double compression_ratio(const KVLedger& ledger);

// Top-`keep` history positions by column sums of `attention`, ties toward
// earlier positions; all of them when keep exceeds the history. Sorted ascending.
std::vector<std::size_t> accum_attention_evict(const Matrix& attention, const std::vector<std::size_t>& history,
                                               int keep);

// Replays the conversation token by token. The accumulated-attention policy
// needs `attention` (L x L over the plain sequence; see needs_attention).
SimResult simulate(const SegmentedConversation& conv, const SimRequest& request,
                   const Matrix* attention = nullptr);

bool needs_attention(const SimRequest& request);

// Synthetic conversation with uniform lengths; token ids cycle through [0, vocab).
SegmentedConversation uniform_conversation(std::size_t sys, std::size_t segments, std::size_t body,
                                           std::size_t query, int vocab = 64);

}  // namespace sonic
