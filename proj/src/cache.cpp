// SPDX-License-Identifier: Apache-2.0

#include "sonic/cache.hpp"

#include <algorithm>
#include <cmath>

#include "sonic/errors.hpp"

namespace sonic {

const char* policy_name(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::Full: return "full";
        case PolicyKind::Sonic: return "sonic";
        case PolicyKind::SinkWindow: return "sink_window";
        case PolicyKind::AccumAttention: return "accum_attention";
    }
    return "?";
}

PolicyKind parse_policy(const std::string& name) {
    if (name == "full") return PolicyKind::Full;
    if (name == "sonic") return PolicyKind::Sonic;
    if (name == "sink_window") return PolicyKind::SinkWindow;
    if (name == "accum_attention" || name == "h2o_like") return PolicyKind::AccumAttention;
    throw ConfigError("unknown cache policy '" + name + "'");
}

void EvictionPolicy::validate() const {
    if (kind == PolicyKind::SinkWindow && (sink < 1 || window < 1)) {
        throw ConfigError("sink_window: sink and window must be positive");
    }
    if (kind == PolicyKind::AccumAttention && keep < 1) throw ConfigError("accum_attention: keep must be positive");
}

std::size_t CostModel::bytes_per_position() const {
    return static_cast<std::size_t>(layers) * static_cast<std::size_t>(heads) * static_cast<std::size_t>(head_dim) * 2 *
           static_cast<std::size_t>(value_width);
}

CostModel cost_model_for(const ModelConfig& config) {
    return {config.layers, config.heads, config.dim / config.heads, 8};
}

std::size_t KVLedger::append(const PositionTag& tag) {
    LedgerEntry e;
    e.tag = tag;
    e.appended_at = entries_.size();
    entries_.push_back(e);
    ++resident_;
    return entries_.size() - 1;
}

void KVLedger::evict(std::size_t position) {
    if (position >= entries_.size()) {
        throw IndexError("ledger: position " + std::to_string(position) + " was never appended");
    }
    auto& e = entries_[position];
    if (!e.resident) return;
    e.resident = false;
    e.evicted_at = clock();
    events_.push_back({clock(), position});
    --resident_;
}

std::vector<std::size_t> KVLedger::resident_positions() const {
    std::vector<std::size_t> out;
    for (std::size_t p = 0; p < entries_.size(); ++p) {
        if (entries_[p].resident) out.push_back(p);
    }
    return out;
}

namespace {

bool is_history(const PositionTag& t) { return t.kind == TagKind::Body || t.kind == TagKind::Nexus; }

}  // namespace

std::size_t KVLedger::history_total() const {
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(), [](const LedgerEntry& e) { return is_history(e.tag); }));
}

std::size_t KVLedger::history_resident() const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const LedgerEntry& e) {
        return e.resident && is_history(e.tag);
    }));
}

std::size_t KVLedger::body_total() const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const LedgerEntry& e) {
        return e.tag.kind == TagKind::Body;
    }));
}

double compression_ratio(const KVLedger& ledger) {
    const std::size_t original = ledger.body_total();
    if (original == 0) return 0.0;
    return 1.0 - static_cast<double>(ledger.history_resident()) / static_cast<double>(original);
}

std::vector<std::size_t> accum_attention_evict(const Matrix& attention, const std::vector<std::size_t>& history,
                                               int keep) {
    if (keep < 0) throw ConfigError("accum_attention: keep must be non-negative");
    if (static_cast<std::size_t>(keep) >= history.size()) {
        auto all = history;
        std::sort(all.begin(), all.end());
        return all;
    }
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t q : history) {
        if (q >= attention.cols) throw IndexError("accum_attention: position outside the attention trace");
        double mass = 0.0;
        for (std::size_t p = 0; p < attention.rows; ++p) mass += attention(p, q);
        scored.emplace_back(mass, q);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::size_t> kept;
    for (int i = 0; i < keep; ++i) kept.push_back(scored[static_cast<std::size_t>(i)].second);
    std::sort(kept.begin(), kept.end());
    return kept;
}

bool needs_attention(const SimRequest& request) { return request.policy.kind == PolicyKind::AccumAttention; }

namespace {

struct Replay {
    KVLedger ledger;
    std::size_t peak = 0;
};

void note_peak(Replay& r) { r.peak = std::max(r.peak, r.ledger.resident_count()); }

Replay replay_sonic(const AugmentedSequence& seq) {
    Replay r;
    // Segment i's body leaves the cache when the clock reaches max(N_i) + 1.
    auto evict_due = [&](std::size_t clock) {
        for (std::size_t i = 0; i < seq.bodies.size(); ++i) {
            if (!seq.nexus[i].empty() && seq.nexus[i].end == clock) {
                for (std::size_t p = seq.bodies[i].begin; p < seq.bodies[i].end; ++p) r.ledger.evict(p);
            }
        }
    };
    for (std::size_t p = 0; p < seq.length(); ++p) {
        evict_due(p);
        r.ledger.append(seq.tags[p]);
        note_peak(r);
    }
    evict_due(seq.length());
    return r;
}

Replay replay_sink_window(const AugmentedSequence& seq, std::size_t sink, std::size_t window) {
    Replay r;
    std::vector<std::size_t> history;
    for (std::size_t p = 0; p < seq.length(); ++p) {
        r.ledger.append(seq.tags[p]);
        if (is_history(seq.tags[p])) {
            history.push_back(p);
            const std::size_t n = history.size() - 1;
            // The position sliding out of the window, unless it is a sink.
            if (n >= window) {
                const std::size_t out = n - window;
                if (out >= sink) r.ledger.evict(history[out]);
            }
        }
        note_peak(r);
    }
    return r;
}

Replay replay_accum(const AugmentedSequence& seq, const Matrix& attention, int keep) {
    Replay r;
    std::vector<std::size_t> history;
    for (std::size_t p = 0; p < seq.length(); ++p) {
        r.ledger.append(seq.tags[p]);
        if (is_history(seq.tags[p])) history.push_back(p);
        note_peak(r);
    }
    const auto kept = accum_attention_evict(attention, history, keep);
    for (std::size_t p : history) {
        if (!std::binary_search(kept.begin(), kept.end(), p)) r.ledger.evict(p);
    }
    return r;
}

SimResult finish(AugmentedSequence seq, Replay replay, const SimRequest& request, const std::string& policy) {
    SimResult out;
    out.report.policy = policy;
    out.report.budget = seq.budget;
    out.report.requested_ratio = request.ratio;
    out.report.length = seq.length();
    out.report.original_history = replay.ledger.body_total();
    out.report.retained_history = replay.ledger.history_resident();
    out.report.peak_resident = replay.peak;
    out.report.peak_bytes = replay.peak * request.cost.bytes_per_position();
    out.report.attended_at_decode = replay.ledger.resident_count();
    out.report.compression_ratio = compression_ratio(replay.ledger);
    out.report.evictions = replay.ledger.evicted_count();
    out.sequence = std::move(seq);
    out.ledger = std::move(replay.ledger);
    return out;
}

SimResult simulate_sonic(const SegmentedConversation& conv, const SimRequest& request, int budget) {
    auto seq = insert_nexus(conv, budget, request.nexus);
    auto replay = replay_sonic(seq);
    return finish(std::move(seq), std::move(replay), request, "sonic");
}

constexpr double kRatioSlack = 1e-12;

}  // namespace

SimResult simulate(const SegmentedConversation& conv, const SimRequest& request, const Matrix* attention) {
    request.policy.validate();
    if (request.ratio && (*request.ratio < 0.0 || *request.ratio > 1.0)) {
        throw ConfigError("simulate: ratio must lie in [0, 1]");
    }
    const PolicyKind kind = request.policy.kind;
    if (kind == PolicyKind::Sonic) {
        if (request.budget.has_value() == request.ratio.has_value()) {
            throw UsageError("simulate: sonic needs exactly one of budget or ratio");
        }
        if (request.budget) return simulate_sonic(conv, request, *request.budget);
        // Largest budget that still meets the requested ratio.
        auto ks = request.nexus.k_set;
        std::sort(ks.begin(), ks.end());
        for (auto it = ks.rbegin(); it != ks.rend(); ++it) {
            auto r = simulate_sonic(conv, request, *it);
            if (r.report.compression_ratio + kRatioSlack >= *request.ratio) return r;
        }
        auto r = simulate_sonic(conv, request, ks.front());
        r.report.ratio_unreachable = true;
        return r;
    }

    auto seq = plain_sequence(conv);
    const std::size_t history = conv.history_tokens();
    std::optional<std::size_t> keep;
    if (request.ratio) {
        keep = static_cast<std::size_t>(std::floor((1.0 - *request.ratio) * static_cast<double>(history) + 1e-9));
    }
    switch (kind) {
        case PolicyKind::Full: {
            Replay r;
            for (std::size_t p = 0; p < seq.length(); ++p) {
                r.ledger.append(seq.tags[p]);
                note_peak(r);
            }
            return finish(std::move(seq), std::move(r), request, "full");
        }
        case PolicyKind::SinkWindow: {
            std::size_t sink = static_cast<std::size_t>(request.policy.sink);
            std::size_t window = static_cast<std::size_t>(request.policy.window);
            if (keep) {
                sink = std::min(sink, *keep);
                window = *keep - sink;
            }
            auto r = replay_sink_window(seq, sink, window);
            return finish(std::move(seq), std::move(r), request, "sink_window");
        }
        case PolicyKind::AccumAttention: {
            if (attention == nullptr) throw UsageError("simulate: accum_attention needs an attention trace");
            if (attention->rows != seq.length() || attention->cols != seq.length()) {
                throw UsageError("simulate: attention trace does not match the sequence length");
            }
            const int k = keep ? static_cast<int>(*keep) : request.policy.keep;
            auto r = replay_accum(seq, *attention, k);
            return finish(std::move(seq), std::move(r), request, "accum_attention");
        }
        default:
            break;
    }
    throw UsageError("simulate: unhandled policy");
}

nlohmann::json to_json(const SimReport& r) {
    nlohmann::json j{{"policy", r.policy},
                     {"budget", r.budget},
                     {"ratio_unreachable", r.ratio_unreachable},
                     {"length", r.length},
                     {"original_history", r.original_history},
                     {"retained_history", r.retained_history},
                     {"peak_resident", r.peak_resident},
                     {"peak_bytes", r.peak_bytes},
                     {"attended_at_decode", r.attended_at_decode},
                     {"compression_ratio", r.compression_ratio},
                     {"evictions", r.evictions}};
    j["requested_ratio"] = r.requested_ratio ? nlohmann::json(*r.requested_ratio) : nlohmann::json(nullptr);
    return j;
}

SegmentedConversation uniform_conversation(std::size_t sys, std::size_t segments, std::size_t body,
                                           std::size_t query, int vocab) {
    SegmentedConversation c;
    auto push = [&](std::size_t n) {
        const std::size_t begin = c.tokens.size();
        for (std::size_t i = 0; i < n; ++i) c.tokens.push_back(static_cast<int>(c.tokens.size() % static_cast<std::size_t>(vocab)));
        return Span{begin, c.tokens.size()};
    };
    c.sys = push(sys);
    for (std::size_t i = 0; i < segments; ++i) {
        Segment s;
        s.role = i % 2 == 0 ? Role::User : Role::Assistant;
        s.turn_id = static_cast<int>(i / 2 + 1);
        s.body = push(body);
        c.segments.push_back(s);
    }
    c.query = push(query);
    return c;
}

}  // namespace sonic
