// SPDX-License-Identifier: Apache-2.0

// Independent checkers for generated benchmark samples. They read only the
// rendered text, never the generator's internal state.

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "sonic/benchgen.hpp"

namespace sonic::oracles {

inline std::vector<std::string> numbers(const std::string& text) {
    std::vector<std::string> out;
    static const std::regex re(R"(\d+)");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        out.push_back(it->str());
    }
    return out;
}

inline std::string history_text(const ChatTranscript& t) {
    std::string s = t.system.value_or("");
    for (const auto& turn : t.turns) s += "\n" + turn.user + "\n" + turn.assistant;
    return s;
}

// Gold occurs exactly once as a number in the history, never in the query,
// and the query avoids the entity name.
inline bool coreres_sound(const BenchmarkSample& s) {
    const auto hist = numbers(history_text(s.conversation));
    const auto query = numbers(s.conversation.query);
    if (std::count(hist.begin(), hist.end(), s.gold) != 1) return false;
    if (std::count(query.begin(), query.end(), s.gold) != 0) return false;
    const std::string entity = s.meta.value("entity", std::string());
    return entity.empty() || s.conversation.query.find(entity) == std::string::npos;
}

// Sums every person's count after resolving the fact chain; nullopt when a
// fact refers to an unknown person or no fact is present.
inline std::optional<long> evaluate_facts(const std::vector<std::string>& messages) {
    static const std::regex base(R"(([A-Z][a-z]+) has (\d+) ([a-z]+)\.)");
    static const std::regex times(R"(([A-Z][a-z]+) has (\d+) times as many ([a-z]+) as ([A-Z][a-z]+)\.)");
    static const std::regex diff(R"(([A-Z][a-z]+) has (\d+) (more|fewer) ([a-z]+) than ([A-Z][a-z]+)\.)");
    std::map<std::string, long> value;
    bool any = false;
    for (const auto& m : messages) {
        std::smatch g;
        if (std::regex_search(m, g, times)) {
            if (!value.count(g[4])) return std::nullopt;
            value[g[1]] = std::stol(g[2]) * value[g[4]];
        } else if (std::regex_search(m, g, diff)) {
            if (!value.count(g[5])) return std::nullopt;
            const long n = std::stol(g[2]);
            value[g[1]] = g[3] == "more" ? value[g[5]] + n : value[g[5]] - n;
        } else if (std::regex_search(m, g, base)) {
            value[g[1]] = std::stol(g[2]);
        } else {
            continue;
        }
        any = true;
    }
    if (!any) return std::nullopt;
    long total = 0;
    for (const auto& [name, v] : value) total += v;
    return total;
}

// User messages of the fact turns, optionally leaving one out.
inline std::vector<std::string> fact_messages(const BenchmarkSample& s, std::optional<std::size_t> drop = std::nullopt) {
    std::vector<std::string> out;
    std::size_t k = 0;
    for (int t : s.meta.at("fact_turns")) {
        if (drop && *drop == k++) continue;
        out.push_back(s.conversation.turns.at(static_cast<std::size_t>(t - 1)).user);
    }
    return out;
}

inline bool gsm_gold_matches(const BenchmarkSample& s) {
    const auto v = evaluate_facts(fact_messages(s));
    return v.has_value() && std::to_string(*v) == s.gold;
}

}  // namespace sonic::oracles
