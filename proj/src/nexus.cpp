// SPDX-License-Identifier: Apache-2.0

#include "sonic/nexus.hpp"

#include <algorithm>
#include <random>

#include "sonic/errors.hpp"

namespace sonic {

void NexusConfig::validate() const {
    if (k_max < 1) throw ConfigError("nexus.k_max must be >= 1");
    if (t_max < 1) throw ConfigError("nexus.t_max must be >= 1");
    if (k_set.empty()) throw ConfigError("nexus.k_set must be nonempty");
    if (!std::is_sorted(k_set.begin(), k_set.end()) ||
        std::adjacent_find(k_set.begin(), k_set.end()) != k_set.end()) {
        throw ConfigError("nexus.k_set must be strictly increasing");
    }
    for (int k : k_set) {
        if (k < 1 || k > k_max) {
            throw ConfigError("nexus.k_set entry " + std::to_string(k) + " outside [1, k_max]");
        }
    }
    if (!allows(k_default)) throw ConfigError("nexus.k_default must be a member of k_set");
    if (base_init == BaseInit::KeywordAverage && keywords.empty()) {
        throw ConfigError("nexus.keywords must be nonempty for keyword_average init");
    }
}

bool NexusConfig::allows(int k) const { return std::binary_search(k_set.begin(), k_set.end(), k); }

nlohmann::json to_json(const NexusConfig& c) {
    return {{"k_max", c.k_max},
            {"k_default", c.k_default},
            {"k_set", c.k_set},
            {"base_init", c.base_init == BaseInit::KeywordAverage ? "keyword_average" : "seeded_random"},
            {"t_max", c.t_max},
            {"keywords", c.keywords},
            {"base_seed", c.base_seed}};
}

NexusConfig nexus_config_from_json(const nlohmann::json& j) {
    NexusConfig c;
    try {
        c.k_max = j.value("k_max", c.k_max);
        c.k_default = j.value("k_default", c.k_default);
        c.k_set = j.value("k_set", c.k_set);
        const auto init = j.value("base_init", std::string("keyword_average"));
        if (init == "keyword_average") {
            c.base_init = BaseInit::KeywordAverage;
        } else if (init == "seeded_random") {
            c.base_init = BaseInit::SeededRandom;
        } else {
            throw ConfigError("nexus.base_init: unknown mode '" + init + "'");
        }
        c.t_max = j.value("t_max", c.t_max);
        c.keywords = j.value("keywords", c.keywords);
        c.base_seed = j.value("base_seed", c.base_seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("nexus: ") + e.what());
    }
    c.validate();
    return c;
}

const char* tag_name(TagKind kind) {
    switch (kind) {
        case TagKind::Sys: return "SYS";
        case TagKind::Body: return "BODY";
        case TagKind::Nexus: return "NEXUS";
        case TagKind::Query: return "QUERY";
    }
    return "?";
}

std::size_t AugmentedSequence::nexus_count() const {
    std::size_t n = 0;
    for (const auto& s : nexus) n += s.size();
    return n;
}

void AugmentedSequence::append_query_token(int token) {
    tokens.push_back(token);
    tags.push_back({TagKind::Query, -1, 0, 0});
    query.end = tokens.size();
}

namespace {

AugmentedSequence layout(const SegmentedConversation& conv, int budget) {
    AugmentedSequence seq;
    seq.budget = budget;
    auto copy = [&](Span src, PositionTag tag) {
        Span dst{seq.tokens.size(), seq.tokens.size()};
        for (std::size_t i = src.begin; i < src.end; ++i) {
            seq.tokens.push_back(conv.tokens[i]);
            seq.tags.push_back(tag);
        }
        dst.end = seq.tokens.size();
        return dst;
    };
    seq.sys = copy(conv.sys, {TagKind::Sys, -1, 0, 0});
    for (std::size_t i = 0; i < conv.segments.size(); ++i) {
        const auto& s = conv.segments[i];
        const int seg = static_cast<int>(i);
        seq.segments.push_back(s);
        seq.bodies.push_back(copy(s.body, {TagKind::Body, seg, 0, s.turn_id}));
        const int k_i = std::min<int>(budget, static_cast<int>(s.body.size()));
        Span run{seq.tokens.size(), seq.tokens.size()};
        for (int j = 1; j <= k_i; ++j) {
            seq.tokens.push_back(-1);
            seq.tags.push_back({TagKind::Nexus, seg, j, s.turn_id});
        }
        run.end = seq.tokens.size();
        seq.nexus.push_back(run);
    }
    seq.query = copy(conv.query, {TagKind::Query, -1, 0, 0});
    return seq;
}

}  // namespace

AugmentedSequence insert_nexus(const SegmentedConversation& conv, int budget, const NexusConfig& config) {
    if (!config.allows(budget)) {
        throw BudgetError("budget " + std::to_string(budget) + " is not in the configured k_set");
    }
    for (const auto& s : conv.segments) {
        if (s.turn_id < 1 || s.turn_id > config.t_max) {
            throw IndexError("turn id " + std::to_string(s.turn_id) + " exceeds turn table size " +
                             std::to_string(config.t_max));
        }
    }
    return layout(conv, budget);
}

AugmentedSequence plain_sequence(const SegmentedConversation& conv) { return layout(conv, 0); }

SegmentedConversation strip_nexus(const AugmentedSequence& seq) {
    SegmentedConversation conv;
    auto copy = [&](Span src) {
        Span dst{conv.tokens.size(), conv.tokens.size()};
        for (std::size_t i = src.begin; i < src.end; ++i) conv.tokens.push_back(seq.tokens[i]);
        dst.end = conv.tokens.size();
        return dst;
    };
    conv.sys = copy(seq.sys);
    for (std::size_t i = 0; i < seq.segments.size(); ++i) {
        conv.segments.push_back({seq.segments[i].role, seq.segments[i].turn_id, copy(seq.bodies[i])});
    }
    conv.query = copy(seq.query);
    return conv;
}

std::vector<double> compose_embedding(const NexusEmbeddings& emb, int slot, int turn) {
    if (slot < 1 || static_cast<std::size_t>(slot) > emb.pos.rows) {
        throw IndexError("nexus slot " + std::to_string(slot) + " outside [1, " +
                         std::to_string(emb.pos.rows) + "]");
    }
    if (turn < 1 || static_cast<std::size_t>(turn) > emb.turn.rows) {
        throw IndexError("turn " + std::to_string(turn) + " outside [1, " +
                         std::to_string(emb.turn.rows) + "]");
    }
    std::vector<double> out(emb.base.cols);
    const auto p = emb.pos.row(static_cast<std::size_t>(slot - 1));
    const auto t = emb.turn.row(static_cast<std::size_t>(turn - 1));
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = emb.base(0, c) + p[c] + t[c];
    return out;
}

std::vector<double> init_base_embedding(const Vocabulary& vocab, const Matrix& token_embedding,
                                        const NexusConfig& config, BaseInit mode) {
    std::vector<double> out(token_embedding.cols, 0.0);
    if (mode == BaseInit::SeededRandom) {
        std::mt19937_64 rng(config.base_seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : out) v = dist(rng);
        return out;
    }
    if (config.keywords.empty()) throw ConfigError("keyword_average init needs at least one keyword");
    for (const auto& kw : config.keywords) {
        auto id = vocab.find(kw);
        if (!id || static_cast<std::size_t>(*id) >= token_embedding.rows) {
            throw ConfigError("keyword '" + kw + "' has no embedding row");
        }
        const auto row = token_embedding.row(static_cast<std::size_t>(*id));
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
    }
    for (auto& v : out) v /= static_cast<double>(config.keywords.size());
    return out;
}

}  // namespace sonic
