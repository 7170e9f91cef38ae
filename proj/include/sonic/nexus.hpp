// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonic/matrix.hpp"
#include "sonic/transcript.hpp"

namespace sonic {

enum class BaseInit { KeywordAverage, SeededRandom };

struct NexusConfig {
    int k_max = 64;
    // Budget used when no explicit one is requested.
    int k_default = 16;
    std::vector<int> k_set{4, 8, 16, 32, 64};
    BaseInit base_init = BaseInit::KeywordAverage;
    // Rows of the turn-embedding table; turn ids beyond it are rejected.
    int t_max = 64;
    std::vector<std::string> keywords{"summary", "condensed"};
    std::uint64_t base_seed = 0;

    void validate() const;
    bool allows(int k) const;
    bool operator==(const NexusConfig&) const = default;
};

nlohmann::json to_json(const NexusConfig& c);
NexusConfig nexus_config_from_json(const nlohmann::json& j);

enum class TagKind { Sys, Body, Nexus, Query };

struct PositionTag {
    TagKind kind = TagKind::Sys;
    // 0-based segment index for Body/Nexus, -1 otherwise.
    int segment = -1;
    // 1-based slot within the segment's Nexus run (Nexus only).
    int slot = 0;
    // Turn id of the segment (Body/Nexus only).
    int turn = 0;
    bool operator==(const PositionTag&) const = default;
};

const char* tag_name(TagKind kind);

// Token sequence with Nexus runs interleaved after each historical body.
// Nexus positions hold token id -1; their embedding is composed separately.
struct AugmentedSequence {
    std::vector<int> tokens;
    std::vector<PositionTag> tags;
    Span sys;
    std::vector<Segment> segments;  // role/turn of each historical segment
    std::vector<Span> bodies;       // augmented positions of each body
    std::vector<Span> nexus;        // augmented positions of each Nexus run
    Span query;
    int budget = 0;

    std::size_t length() const { return tokens.size(); }
    std::size_t nexus_count() const;
    bool is_nexus(std::size_t p) const { return tags[p].kind == TagKind::Nexus; }
    // Extends the query span by one generated token.
    void append_query_token(int token);
};

// Short-segment rule: a body with fewer than K tokens gets |B| Nexus slots.
AugmentedSequence insert_nexus(const SegmentedConversation& conv, int budget, const NexusConfig& config);

// Teacher layout: the uncompressed conversation, no Nexus positions.
AugmentedSequence plain_sequence(const SegmentedConversation& conv);

// Drops every Nexus position and returns the underlying conversation.
SegmentedConversation strip_nexus(const AugmentedSequence& seq);

struct NexusEmbeddings {
    Matrix base;  // 1 x dim
    Matrix pos;   // k_max x dim
    Matrix turn;  // t_max x dim
};

// e_base + e_pos[slot] + e_turn[turn]; slot and turn are 1-based.
std::vector<double> compose_embedding(const NexusEmbeddings& emb, int slot, int turn);

// Mean of the keyword rows of `token_embedding`, or a seeded normal vector.
std::vector<double> init_base_embedding(const Vocabulary& vocab, const Matrix& token_embedding,
                                        const NexusConfig& config, BaseInit mode);

}  // namespace sonic
