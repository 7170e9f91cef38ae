// SPDX-License-Identifier: Apache-2.0

#include "sonic/transcript.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "sonic/errors.hpp"

namespace sonic {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(char c) {
    switch (c) {
        case '.': case ',': case '?': case '!': case ';': case ':': case '(': case ')':
            return true;
        default:
            return false;
    }
}

// No space is rendered before these.
bool attaches_left(std::string_view tok) {
    return tok.size() == 1 && is_punct(tok[0]) && tok[0] != '(';
}

}  // namespace

std::vector<std::string> reserved_tokens() {
    return {std::string(kImStart), std::string(kImEnd), std::string(kUnk), "system", "user",
            "assistant", "summary", "condensed"};
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (is_space(text[i])) {
            ++i;
            continue;
        }
        if (text.substr(i, 2) == "<|") {
            auto close = text.find("|>", i + 2);
            if (close != std::string_view::npos) {
                out.emplace_back(text.substr(i, close + 2 - i));
                i = close + 2;
                continue;
            }
        }
        if (is_punct(text[i])) {
            out.emplace_back(1, text[i]);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && !is_space(text[j]) && !is_punct(text[j]) && text.substr(j, 2) != "<|") ++j;
        out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> sorted_tokens) : tokens_(std::move(sorted_tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
        if (!inserted) throw ConfigError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
    for (const auto& r : reserved_tokens()) {
        if (!index_.contains(r)) throw ConfigError("vocabulary: missing reserved token '" + r + "'");
    }
    unk_id_ = index_.at(std::string(kUnk));
}

Vocabulary Vocabulary::build(std::span<const std::string> words) {
    std::set<std::string> all(words.begin(), words.end());
    for (auto& r : reserved_tokens()) all.insert(r);
    all.erase("");
    return Vocabulary(std::vector<std::string>(all.begin(), all.end()));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    if (!std::is_sorted(tokens.begin(), tokens.end())) {
        throw ConfigError("vocabulary file " + path.string() + " is not sorted");
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

std::optional<int> Vocabulary::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int Vocabulary::id(std::string_view token) const {
    auto found = find(token);
    if (!found) throw ConfigError("token '" + std::string(token) + "' not in vocabulary");
    return *found;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw IndexError("token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& piece : split_words(text)) ids.push_back(find(piece).value_or(unk_id_));
    return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    bool after_open = false;
    for (int id : ids) {
        const auto& tok = token(id);
        if (!out.empty() && !after_open && !attaches_left(tok)) out += ' ';
        out += tok;
        after_open = tok == "(";
    }
    return out;
}

std::uint64_t Vocabulary::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& t : tokens_) {
        for (unsigned char c : t) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0xff;
        h *= 1099511628211ull;
    }
    return h;
}

const char* role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "?";
}

ChatTranscript transcript_from_messages(std::span<const Message> messages) {
    ChatTranscript t;
    std::size_t i = 0;
    if (!messages.empty() && messages[0].role == Role::System) {
        t.system = messages[0].content;
        i = 1;
    }
    // Pairs of (user, assistant) followed by one trailing user message.
    std::size_t turn = 1;
    while (i < messages.size()) {
        const auto& m = messages[i];
        if (m.role != Role::User) {
            throw ParseError("turn " + std::to_string(turn) + ": expected user message, got " +
                             role_name(m.role));
        }
        if (i + 1 == messages.size()) {
            t.query = m.content;
            return t;
        }
        const auto& reply = messages[i + 1];
        if (reply.role != Role::Assistant) {
            throw ParseError("turn " + std::to_string(turn) + ": expected assistant message, got " +
                             role_name(reply.role));
        }
        t.turns.push_back({m.content, reply.content});
        i += 2;
        ++turn;
    }
    throw ParseError("turn " + std::to_string(turn) +
                     ": transcript must end with a user query, not an assistant message");
}

ChatTranscript transcript_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("transcript: expected a JSON object");
    ChatTranscript t;
    if (j.contains("system") && !j["system"].is_null()) {
        if (!j["system"].is_string()) throw ParseError("transcript: 'system' must be a string or null");
        t.system = j["system"].get<std::string>();
    }
    if (j.contains("turns")) {
        const auto& turns = j["turns"];
        if (!turns.is_array()) throw ParseError("transcript: 'turns' must be an array");
        for (std::size_t k = 0; k < turns.size(); ++k) {
            const auto& turn = turns[k];
            const std::string where = "turn " + std::to_string(k + 1);
            if (!turn.is_object()) throw ParseError(where + ": expected an object");
            if (!turn.contains("user") || !turn["user"].is_string()) {
                throw ParseError(where + ": missing user message");
            }
            if (!turn.contains("assistant") || !turn["assistant"].is_string()) {
                throw ParseError(where + ": missing assistant message");
            }
            t.turns.push_back({turn["user"].get<std::string>(), turn["assistant"].get<std::string>()});
        }
    }
    if (!j.contains("query") || !j["query"].is_string()) {
        throw ParseError("turn " + std::to_string(t.turns.size() + 1) +
                         ": missing trailing user query");
    }
    t.query = j["query"].get<std::string>();
    return t;
}

nlohmann::json transcript_to_json(const ChatTranscript& t) {
    nlohmann::json j;
    j["system"] = t.system ? nlohmann::json(*t.system) : nlohmann::json(nullptr);
    j["turns"] = nlohmann::json::array();
    for (const auto& turn : t.turns) j["turns"].push_back({{"user", turn.user}, {"assistant", turn.assistant}});
    j["query"] = t.query;
    return j;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

void write_jsonl(const std::filesystem::path& path, std::span<const nlohmann::json> rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : rows) out << r.dump() << '\n';
}

std::size_t SegmentedConversation::history_tokens() const {
    std::size_t n = 0;
    for (const auto& s : segments) n += s.body.size();
    return n;
}

SegmentedConversation segment(const ChatTranscript& transcript, const Vocabulary& vocab) {
    SegmentedConversation conv;
    auto append = [&](std::string_view text) {
        Span span{conv.tokens.size(), conv.tokens.size()};
        auto ids = vocab.tokenize(text);
        conv.tokens.insert(conv.tokens.end(), ids.begin(), ids.end());
        span.end = conv.tokens.size();
        return span;
    };
    conv.sys = transcript.system ? append(*transcript.system) : Span{0, 0};
    int turn_id = 1;
    for (const auto& turn : transcript.turns) {
        conv.segments.push_back({Role::User, turn_id, append(turn.user)});
        conv.segments.push_back({Role::Assistant, turn_id, append(turn.assistant)});
        ++turn_id;
    }
    conv.query = append(transcript.query);
    return conv;
}

}  // namespace sonic
