// SPDX-License-Identifier: Apache-2.0

#include "sonic/benchgen.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "sonic/errors.hpp"

namespace sonic {

namespace {

struct Scenario {
    std::string name;
    std::vector<std::string> entities;
    std::string inject_user;       // {entity} {value}
    std::string inject_assistant;  // {entity}
    std::vector<std::string> retrievals;
};

const std::vector<Scenario>& scenarios() {
    static const std::vector<Scenario> pool{
        {"cyberpunk black market",
         {"Viper", "Ghost", "Raven", "Cobalt"},
         "I picked up the {entity} chip at the black market today. The street price of this chip is {value} credits.",
         "Noted. The {entity} chip sounds like a rare find in that market.",
         {"Wait, how much did that thing cost again?", "Remind me, what was the price of that thing?"}},
        {"medieval potion shop",
         {"Ember", "Frost", "Willow", "Thorn"},
         "The old alchemist sold me the {entity} potion. Its brewing time is {value} minutes.",
         "A fine purchase. The {entity} potion is well known among travelers.",
         {"How long did that brew take to make?", "Remind me, what was the brewing time of that one?"}},
        {"space cargo station",
         {"Orion", "Vega", "Lyra", "Atlas"},
         "The cargo crate labeled {entity} just arrived at the station. Its serial number is {value}.",
         "Understood, I will keep the {entity} crate in mind for the inventory.",
         {"What was the serial number on that crate again?", "Which serial number did that delivery have?"}},
        {"library archive",
         {"Marlowe", "Quill", "Sable", "Juniper"},
         "I borrowed the {entity} manuscript from the archive. It has {value} pages in total.",
         "Lovely. The {entity} manuscript is one of the oldest items in the archive.",
         {"How many pages did that old book have?", "Remind me, how long was that manuscript?"}},
        {"racing garage",
         {"Falcon", "Titan", "Blaze", "Nova"},
         "The mechanics finished tuning the {entity} engine. Its top speed is {value} kilometers per hour.",
         "Impressive work on the {entity} engine by the whole garage team.",
         {"What top speed did that machine reach?", "How fast could that engine go again?"}},
        {"botanical greenhouse",
         {"Lumen", "Pearl", "Saffron", "Velvet"},
         "The gardener measured the {entity} orchid this morning. Its height is {value} millimeters.",
         "The {entity} orchid must be thriving in the greenhouse.",
         {"How tall was that plant again?", "Remind me, what height did that flower have?"}},
        {"museum vault",
         {"Aurora", "Basalt", "Cypress", "Onyx"},
         "The curator moved the {entity} statue into the vault. Its insurance value is {value} coins.",
         "Understood. The {entity} statue will be safe in the vault.",
         {"What was the insurance value of that piece?", "How much was that artwork insured for?"}},
        {"harbor shipyard",
         {"Mariner", "Tempest", "Coral", "Drift"},
         "The shipyard launched the {entity} vessel yesterday. Its crew capacity is {value} sailors.",
         "What a milestone for the {entity} vessel and the shipyard.",
         {"How many sailors could that ship hold?", "Remind me, what crew capacity did that boat have?"}},
    };
    return pool;
}

const std::vector<std::string> kNames{"Tom", "Jerry", "Anna", "Liam", "Mia", "Noah", "Emma", "Omar", "Sara", "Ravi"};
const std::vector<std::string> kItems{"apples", "pencils", "stickers", "marbles", "books", "coins", "cards", "shells"};
const std::vector<std::string> kFactLead{"By the way, {fact}", "Here is something to remember. {fact}",
                                         "{fact}", "Quick note before I forget. {fact}"};
const std::vector<std::string> kFactAck{"Got it, I will remember that.", "Okay, noted for later.",
                                        "Thanks, I have written that down.", "Understood, that is recorded."};
const std::vector<std::string> kSumQuery{"Now, how many {item} do they have altogether?",
                                         "Going back to the numbers, how many {item} do they have in total?"};

const std::vector<std::string> kObjects{"lamp", "robot", "drone", "gate", "furnace"};
const std::vector<std::string> kStates{"idle", "charging", "offline", "active", "paused", "locked", "humming"};
const std::vector<std::string> kListItems{"milk", "bread", "rice", "eggs", "tea", "butter", "honey", "flour"};
const std::vector<std::string> kColors{"red", "green", "yellow", "silver"};
const std::vector<std::string> kPortals{"hatch", "door", "window", "valve"};
const std::vector<std::pair<std::string, std::string>> kStatePairs{{"open", "sealed"}, {"unlocked", "bolted"}};

const std::vector<std::string> kTemplates{
    // status updating
    "The {object} is now {state}.", "Update: the {object} is now {state}.", "Okay, status recorded.",
    "What is the current status of the {object}?",
    // constraint accumulation
    "Please add {item} to the shopping list.", "Added to the list.",
    "How many things are on the shopping list now?",
    // nested logic
    "If the {color} switch is up, then the {portal} is {a}. Otherwise, it is {b}.",
    "The {color} switch is {position}.", "I see, that rule makes sense.", "Thanks for letting me know.",
    "Is the {portal} {a} or {b} right now?", "up", "down",
    // scattered aggregation
    "{name} brought {n} {item} to the picnic.", "How many {item} were brought to the picnic in total?",
    // math facts
    "{name} has {n} {item}.", "{name} has {n} times as many {item} as {other}.",
    "{name} has {n} more {item} than {other}.", "{name} has {n} fewer {item} than {other}.",
};

const std::vector<Turn>& distractions() {
    static const std::vector<Turn> pool{
        {"Do you have any tips for falling asleep faster at night?",
         "Try keeping a regular schedule, dimming the lights early, and avoiding screens before bed."},
        {"What is a good way to start learning to paint?",
         "Begin with simple watercolor studies of fruit or cups and focus on light and shadow."},
        {"I am thinking about planting a small herb garden on my balcony.",
         "Basil, mint, and parsley are forgiving choices that enjoy plenty of sunlight."},
        {"Can you suggest a relaxing hobby for rainy weekends?",
         "Jigsaw puzzles, knitting, or baking bread are calm ways to spend a rainy afternoon."},
        {"How do I keep my kitchen knives sharp?",
         "Hone them often with a steel and use a whetstone every few months for a fresh edge."},
        {"What should I pack for a hiking trip in the mountains?",
         "Bring layers, a rain jacket, plenty of water, snacks, and a reliable map of the trail."},
        {"Tell me something interesting about octopuses.",
         "Octopuses have three hearts and can change the color and texture of their skin."},
        {"I want to cook something warm for dinner tonight.",
         "A simple vegetable soup with garlic, onions, and fresh herbs is cozy and easy."},
        {"Why do leaves change color in autumn?",
         "As days shorten, trees stop making green pigment and hidden yellow and orange tones appear."},
        {"How can I make my mornings less rushed?",
         "Prepare clothes and breakfast the night before so the morning routine feels calmer."},
        {"What is a fun game to play with friends at a party?",
         "Charades is always a hit because everyone can join and nobody needs special equipment."},
        {"Could you recommend a way to practice a new language?",
         "Short daily conversations and listening to podcasts help words stick much faster."},
        {"I keep forgetting to drink water during the day.",
         "Keep a bottle on your desk and take a few sips whenever you finish a small task."},
        {"What makes a good cup of tea?",
         "Use fresh water, the right temperature for the leaves, and do not steep it too long."},
        {"How do birds know where to migrate?",
         "Many birds use the sun, the stars, and even the magnetic field of the earth to navigate."},
        {"Any advice for keeping houseplants alive?",
         "Check the soil before watering and place each plant where its light needs are met."},
        {"What is the best way to clean a cast iron pan?",
         "Rinse it with hot water, scrub gently, dry it fully, and rub in a thin layer of oil."},
        {"I would like to read more books this year.",
         "Carry a book everywhere and read a few pages whenever you have a quiet moment."},
        {"How do I stay focused while studying?",
         "Work in short focused sessions with small breaks and keep your phone in another room."},
        {"What is a nice gift for a friend who loves cooking?",
         "A good wooden spoon set or a collection of spices from around the world is thoughtful."},
        {"Why is the sky blue during the day?",
         "Sunlight scatters off the air, and blue light scatters the most, so the sky looks blue."},
        {"Can you help me think of a name for my cat?",
         "Names like Biscuit, Pepper, or Mochi are playful and easy to call across the house."},
        {"What are some ways to save energy at home?",
         "Switch off unused lights, seal drafty windows, and wash clothes in cold water."},
        {"I am feeling a bit stressed about work lately.",
         "Short walks, steady breathing, and talking with someone you trust can really help."},
        {"How do volcanoes form?",
         "Molten rock rises through weak spots in the crust and builds mountains as it cools."},
        {"What is a good stretch after sitting all day?",
         "Gently stretch your hips, shoulders, and neck, and stand up every hour if you can."},
        {"Tell me a little about the history of chess.",
         "Chess grew from older board games in India and Persia before spreading across Europe."},
        {"How should I prepare for a job interview?",
         "Research the company, practice common questions aloud, and prepare a few of your own."},
        {"Do you know any tricks for remembering names?",
         "Repeat the name right away and link it to a vivid picture or a familiar person."},
        {"What is a simple dessert I can make quickly?",
         "Sliced fruit with yogurt and a drizzle of syrup takes only a few minutes to prepare."},
    };
    return pool;
}

std::string fill(std::string text, const std::map<std::string, std::string>& values) {
    for (const auto& [key, val] : values) {
        const std::string token = "{" + key + "}";
        for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + val.size())) {
            text.replace(pos, token.size(), val);
        }
    }
    return text;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

class SampleRng {
public:
    SampleRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
        : eng_(splitmix(splitmix(seed ^ (stream * 0x9e3779b97f4a7c15ull)) + index)) {}

    int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
    int uniform(IntRange r) { return uniform(r.lo, r.hi); }
    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))];
    }
    // k distinct indices from [0, n).
    std::vector<std::size_t> distinct(std::size_t n, std::size_t k) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), eng_);
        idx.resize(k);
        return idx;
    }
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

std::vector<Turn> pick_distractions(SampleRng& rng, int count, IntRange padding) {
    const auto& pool = distractions();
    std::vector<Turn> out;
    for (std::size_t i : rng.distinct(pool.size(), static_cast<std::size_t>(count))) out.push_back(pool[i]);
    if (padding.hi == 0) return out;
    for (auto& t : out) {
        for (std::string* msg : {&t.user, &t.assistant}) {
            const int extra = rng.uniform(padding);
            for (int e = 0; e < extra; ++e) *msg += " " + rng.pick(pool).assistant;
        }
    }
    return out;
}

// Places fact turns in order among distraction turns; facts land within the
// first `window` turns. Returns the 1-based turn index of every fact.
std::vector<int> scatter(SampleRng& rng, std::vector<Turn> facts, std::vector<Turn> noise, std::size_t window,
                         std::vector<Turn>& out) {
    const std::size_t total = facts.size() + noise.size();
    window = std::clamp(window, facts.size(), total);
    auto slots = rng.distinct(window, facts.size());
    std::sort(slots.begin(), slots.end());
    out.clear();
    std::vector<int> where;
    std::size_t f = 0, d = 0;
    for (std::size_t t = 0; t < total; ++t) {
        if (f < facts.size() && slots[f] == t) {
            out.push_back(facts[f++]);
            where.push_back(static_cast<int>(t + 1));
        } else {
            out.push_back(noise[d++]);
        }
    }
    return where;
}

const std::string kSystemPrompt = "You are a helpful assistant. Answer using the conversation history.";

BenchmarkSample coreres_sample(const GenSpec& spec, const std::vector<const Scenario*>& pool, std::size_t index,
                               std::uint64_t stream) {
    SampleRng rng(spec.seed, stream, index);
    const Scenario& sc = *pool[static_cast<std::size_t>(rng.uniform(0, static_cast<int>(pool.size()) - 1))];
    const std::string& entity = rng.pick(sc.entities);
    const std::string value = std::to_string(rng.uniform(100, 999));
    const int n_distract = rng.uniform(spec.distractions);
    auto noise = pick_distractions(rng, n_distract, spec.padding);
    // Injection happens in one of the first two turns.
    const int before = n_distract > 0 ? rng.uniform(0, 1) : 0;

    BenchmarkSample s;
    s.conversation.system = kSystemPrompt;
    for (int i = 0; i < before; ++i) s.conversation.turns.push_back(noise[static_cast<std::size_t>(i)]);
    s.conversation.turns.push_back({fill(sc.inject_user, {{"entity", entity}, {"value", value}}),
                                    fill(sc.inject_assistant, {{"entity", entity}})});
    for (int i = before; i < n_distract; ++i) s.conversation.turns.push_back(noise[static_cast<std::size_t>(i)]);
    s.conversation.query = rng.pick(sc.retrievals);
    s.gold = value;
    s.meta = {{"task", "coreres"},      {"scenario", sc.name}, {"entity", entity},
              {"injection_turn", before + 1}, {"distractions", n_distract}};
    return s;
}

struct MathChain {
    std::vector<std::string> facts;
    int total = 0;
};

MathChain math_chain(SampleRng& rng, int n_facts, const std::string& item) {
    MathChain chain;
    auto names = rng.distinct(kNames.size(), static_cast<std::size_t>(n_facts));
    int prev = rng.uniform(2, 20);
    chain.facts.push_back(fill("{name} has {n} {item}.", {{"name", kNames[names[0]]}, {"n", std::to_string(prev)}, {"item", item}}));
    chain.total = prev;
    for (int f = 1; f < n_facts; ++f) {
        const std::string& name = kNames[names[static_cast<std::size_t>(f)]];
        const std::string& other = kNames[names[static_cast<std::size_t>(f - 1)]];
        int op = rng.uniform(0, 2);
        const int k = rng.uniform(2, 4);
        if (op == 0 && prev * k > 240) op = 1;
        const int c = rng.uniform(1, std::min(10, op == 2 ? std::max(1, prev - 1) : 10));
        if (op == 2 && prev - c < 1) op = 1;
        int next = 0;
        std::string text;
        if (op == 0) {
            next = prev * k;
            text = fill("{name} has {n} times as many {item} as {other}.", {{"name", name}, {"n", std::to_string(k)}, {"item", item}, {"other", other}});
        } else if (op == 1) {
            next = prev + c;
            text = fill("{name} has {n} more {item} than {other}.", {{"name", name}, {"n", std::to_string(c)}, {"item", item}, {"other", other}});
        } else {
            next = prev - c;
            text = fill("{name} has {n} fewer {item} than {other}.", {{"name", name}, {"n", std::to_string(c)}, {"item", item}, {"other", other}});
        }
        chain.facts.push_back(text);
        chain.total += next;
        prev = next;
    }
    return chain;
}

BenchmarkSample gsm_sample(const GenSpec& spec, std::size_t index) {
    SampleRng rng(spec.seed, 2, index);
    const std::string& item = rng.pick(kItems);
    const int n_facts = rng.uniform(spec.facts);
    const auto chain = math_chain(rng, n_facts, item);
    std::vector<Turn> facts;
    for (const auto& f : chain.facts) facts.push_back({fill(rng.pick(kFactLead), {{"fact", f}}), rng.pick(kFactAck)});
    const int n_distract = rng.uniform(spec.distractions);
    BenchmarkSample s;
    s.conversation.system = kSystemPrompt;
    const std::size_t window = facts.size() + static_cast<std::size_t>(n_distract) / 3;
    const auto where = scatter(rng, facts, pick_distractions(rng, n_distract, spec.padding), window, s.conversation.turns);
    s.conversation.query = fill(rng.pick(kSumQuery), {{"item", item}});
    s.gold = std::to_string(chain.total);
    s.meta = {{"task", "gsm8kvar"}, {"item", item}, {"fact_turns", where}, {"distractions", n_distract}};
    return s;
}

BenchmarkSample training_sample(const GenSpec& spec, std::size_t index) {
    static const TaskKind kinds[] = {TaskKind::StatusUpdating, TaskKind::ConstraintAccumulation,
                                     TaskKind::Coreference, TaskKind::NestedLogic,
                                     TaskKind::ScatteredAggregation};
    const TaskKind kind = kinds[index % 5];
    if (kind == TaskKind::Coreference) {
        std::vector<const Scenario*> pool;
        for (const auto& sc : scenarios()) pool.push_back(&sc);
        auto s = coreres_sample(spec, pool, index, 4);
        s.meta["task"] = "train5";
        s.meta["kind"] = task_name(kind);
        return s;
    }
    SampleRng rng(spec.seed, 3, index);
    const int n_distract = rng.uniform(spec.distractions);
    std::vector<Turn> facts;
    BenchmarkSample s;
    s.conversation.system = kSystemPrompt;
    s.meta = {{"task", "train5"}, {"kind", task_name(kind)}, {"distractions", n_distract}};
    switch (kind) {
        case TaskKind::StatusUpdating: {
            const std::string& obj = rng.pick(kObjects);
            const int updates = rng.uniform(2, 4);
            std::string last;
            std::vector<std::string> history;
            for (int u = 0; u < updates; ++u) {
                std::string st;
                // The final state differs from the first so that reading the first update is wrong.
                do st = rng.pick(kStates); while (st == last || (u + 1 == updates && st == history.front()));
                last = st;
                history.push_back(st);
                const char* tmpl = u == 0 ? "The {object} is now {state}." : "Update: the {object} is now {state}.";
                facts.push_back({fill(tmpl, {{"object", obj}, {"state", st}}), "Okay, status recorded."});
            }
            s.conversation.query = fill("What is the current status of the {object}?", {{"object", obj}});
            s.gold = last;
            s.meta["updates"] = history;
            break;
        }
        case TaskKind::ConstraintAccumulation: {
            const auto n = static_cast<std::size_t>(rng.uniform(2, 4));
            for (std::size_t i : rng.distinct(kListItems.size(), n)) {
                facts.push_back({fill("Please add {item} to the shopping list.", {{"item", kListItems[i]}}), "Added to the list."});
            }
            s.conversation.query = "How many things are on the shopping list now?";
            s.gold = std::to_string(n);
            break;
        }
        case TaskKind::NestedLogic: {
            const std::string& color = rng.pick(kColors);
            const std::string& portal = rng.pick(kPortals);
            const auto& [a, b] = rng.pick(kStatePairs);
            const bool up = rng.uniform(0, 1) == 1;
            facts.push_back({fill("If the {color} switch is up, then the {portal} is {a}. Otherwise, it is {b}.",
                                  {{"color", color}, {"portal", portal}, {"a", a}, {"b", b}}),
                             "I see, that rule makes sense."});
            facts.push_back({fill("The {color} switch is {position}.", {{"color", color}, {"position", up ? "up" : "down"}}),
                             "Thanks for letting me know."});
            s.conversation.query = fill("Is the {portal} {a} or {b} right now?", {{"portal", portal}, {"a", a}, {"b", b}});
            s.gold = up ? a : b;
            break;
        }
        case TaskKind::ScatteredAggregation: {
            const std::string& item = rng.pick(kItems);
            const auto n = static_cast<std::size_t>(rng.uniform(2, 4));
            int total = 0;
            for (std::size_t i : rng.distinct(kNames.size(), n)) {
                const int k = rng.uniform(1, 30);
                total += k;
                facts.push_back({fill("{name} brought {n} {item} to the picnic.",
                                      {{"name", kNames[i]}, {"n", std::to_string(k)}, {"item", item}}),
                                 rng.pick(kFactAck)});
            }
            s.conversation.query = fill("How many {item} were brought to the picnic in total?", {{"item", item}});
            s.gold = std::to_string(total);
            break;
        }
        default:
            break;
    }
    const auto where = scatter(rng, facts, pick_distractions(rng, n_distract, spec.padding), facts.size() + static_cast<std::size_t>(n_distract),
                               s.conversation.turns);
    s.meta["fact_turns"] = where;
    return s;
}

}  // namespace

const char* task_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::CoreRes: return "coreres";
        case TaskKind::Gsm8kVariant: return "gsm8kvar";
        case TaskKind::StatusUpdating: return "status_updating";
        case TaskKind::ConstraintAccumulation: return "constraint_accumulation";
        case TaskKind::Coreference: return "coreference_resolution";
        case TaskKind::NestedLogic: return "nested_logic";
        case TaskKind::ScatteredAggregation: return "scattered_aggregation";
    }
    return "?";
}

nlohmann::json to_json(const BenchmarkSample& s) {
    nlohmann::json j = transcript_to_json(s.conversation);
    j["gold"] = s.gold;
    j["meta"] = s.meta;
    return j;
}

BenchmarkSample benchmark_sample_from_json(const nlohmann::json& j) {
    BenchmarkSample s;
    s.conversation = transcript_from_json(j);
    if (j.contains("gold") && j["gold"].is_string()) s.gold = j["gold"].get<std::string>();
    if (j.contains("meta")) s.meta = j["meta"];
    return s;
}

void GenSpec::validate() const {
    if (count < 1) throw ConfigError("genspec: count must be >= 1");
    if (distractions.lo < 0 || distractions.lo > distractions.hi) throw ConfigError("genspec: bad distraction range");
    if (static_cast<std::size_t>(distractions.hi) > distraction_pool().size()) {
        throw ConfigError("genspec: distraction range exceeds the template pool");
    }
    if (padding.lo < 0 || padding.lo > padding.hi) throw ConfigError("genspec: bad padding range");
    if (facts.lo < 2 || facts.lo > facts.hi || facts.hi > static_cast<int>(kNames.size())) {
        throw ConfigError("genspec: bad fact range");
    }
}

GenSpec coreres_default_spec() {
    GenSpec s;
    s.count = 978;
    s.distractions = {4, 6};
    return s;
}

GenSpec gsm8k_variant_default_spec() {
    GenSpec s;
    s.count = 1001;
    s.distractions = {8, 13};
    s.facts = {2, 4};
    return s;
}

GenSpec training_default_spec() {
    GenSpec s;
    s.count = 500;
    s.distractions = {2, 6};
    return s;
}

std::vector<std::string> coreres_scenarios() {
    std::vector<std::string> out;
    for (const auto& sc : scenarios()) out.push_back(sc.name);
    return out;
}

std::vector<BenchmarkSample> gen_coreres(const GenSpec& spec) {
    spec.validate();
    std::vector<const Scenario*> pool;
    for (const auto& sc : scenarios()) {
        if (spec.scenarios.empty() ||
            std::find(spec.scenarios.begin(), spec.scenarios.end(), sc.name) != spec.scenarios.end()) {
            pool.push_back(&sc);
        }
    }
    if (pool.empty()) throw ConfigError("genspec: scenario pool is empty");
    std::vector<BenchmarkSample> out;
    for (int i = 0; i < spec.count; ++i) out.push_back(coreres_sample(spec, pool, static_cast<std::size_t>(i), 1));
    return out;
}

std::vector<BenchmarkSample> gen_gsm8k_variant(const GenSpec& spec) {
    spec.validate();
    std::vector<BenchmarkSample> out;
    for (int i = 0; i < spec.count; ++i) out.push_back(gsm_sample(spec, static_cast<std::size_t>(i)));
    return out;
}

std::vector<BenchmarkSample> gen_training_set(const GenSpec& spec) {
    spec.validate();
    std::vector<BenchmarkSample> out;
    for (int i = 0; i < spec.count; ++i) out.push_back(training_sample(spec, static_cast<std::size_t>(i)));
    return out;
}

const std::vector<Turn>& distraction_pool() { return distractions(); }

std::vector<std::string> benchmark_lexicon() {
    std::set<std::string> words;
    auto add_text = [&](const std::string& text) {
        std::string stripped;
        bool in_placeholder = false;
        for (char c : text) {
            if (c == '{') in_placeholder = true;
            if (!in_placeholder) stripped += c;
            if (c == '}') {
                in_placeholder = false;
                stripped += ' ';
            }
        }
        for (auto& w : split_words(stripped)) words.insert(w);
    };
    for (const auto& sc : scenarios()) {
        add_text(sc.inject_user);
        add_text(sc.inject_assistant);
        for (const auto& r : sc.retrievals) add_text(r);
        for (const auto& e : sc.entities) add_text(e);
    }
    for (const auto* pool : {&kNames, &kItems, &kFactLead, &kFactAck, &kSumQuery, &kObjects, &kStates, &kListItems,
                             &kColors, &kPortals, &kTemplates}) {
        for (const auto& w : *pool) add_text(w);
    }
    for (const auto& [a, b] : kStatePairs) {
        add_text(a);
        add_text(b);
    }
    for (const auto& t : distractions()) {
        add_text(t.user);
        add_text(t.assistant);
    }
    add_text(kSystemPrompt);
    for (int n = 0; n <= 999; ++n) words.insert(std::to_string(n));
    return {words.begin(), words.end()};
}

Vocabulary benchmark_vocabulary() {
    const auto words = benchmark_lexicon();
    return Vocabulary::build(words);
}

}  // namespace sonic
