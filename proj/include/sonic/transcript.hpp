// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace sonic {

inline constexpr std::string_view kImStart = "<|im_start|>";
inline constexpr std::string_view kImEnd = "<|im_end|>";
inline constexpr std::string_view kUnk = "<|unk|>";

// Role words and the base-embedding keywords are always present.
std::vector<std::string> reserved_tokens();

// Splits text into word-level pieces without consulting a vocabulary:
// whitespace separates words, the punctuation marks . , ? ! ; : ( ) are
// pieces of their own, and `<|...|>` runs are kept atomic.
std::vector<std::string> split_words(std::string_view text);

// Frozen word-level vocabulary. Ids are the positions in the sorted token list.
class Vocabulary {
public:
    Vocabulary() = default;

    // Builds from corpus words plus the reserved tokens; duplicates are ignored.
    static Vocabulary build(std::span<const std::string> words);
    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t size() const { return tokens_.size(); }
    std::optional<int> find(std::string_view token) const;
    // Throws ConfigError when the token is absent.
    int id(std::string_view token) const;
    int unk_id() const { return unk_id_; }
    const std::string& token(int id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> tokenize(std::string_view text) const;
    // Canonical rendering: single spaces, no space before closing punctuation.
    std::string decode(std::span<const int> ids) const;

    // FNV-1a over the token list; stored in checkpoints to detect mismatches.
    std::uint64_t fingerprint() const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    explicit Vocabulary(std::vector<std::string> sorted_tokens);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int unk_id_ = 0;
};

struct Turn {
    std::string user;
    std::string assistant;
    bool operator==(const Turn&) const = default;
};

struct ChatTranscript {
    std::optional<std::string> system;
    std::vector<Turn> turns;
    std::string query;

    bool operator==(const ChatTranscript&) const = default;
};

enum class Role { System, User, Assistant };

struct Message {
    Role role;
    std::string content;
};

const char* role_name(Role role);

// Builds a transcript from a flat message list: optional leading system
// message, then strictly alternating user/assistant, ending with a user query.
ChatTranscript transcript_from_messages(std::span<const Message> messages);

ChatTranscript transcript_from_json(const nlohmann::json& j);
nlohmann::json transcript_to_json(const ChatTranscript& t);

// Reads a JSON Lines file; blank lines are skipped.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const nlohmann::json> rows);

struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    bool operator==(const Span&) const = default;
};

struct Segment {
    Role role = Role::User;
    int turn_id = 1;
    Span body;
    bool operator==(const Segment&) const = default;
};

struct SegmentedConversation {
    std::vector<int> tokens;
    Span sys;
    std::vector<Segment> segments;
    Span query;

    std::size_t history() const { return segments.size(); }
    std::size_t history_tokens() const;
    bool operator==(const SegmentedConversation&) const = default;
};

// Each user and assistant message becomes its own historical segment; both
// messages of turn k carry turn_id k. Spans hold message content only.
SegmentedConversation segment(const ChatTranscript& transcript, const Vocabulary& vocab);

}  // namespace sonic
