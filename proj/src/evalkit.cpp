// SPDX-License-Identifier: Apache-2.0

#include "sonic/evalkit.hpp"

#include <algorithm>
#include <cctype>

#include "sonic/errors.hpp"

namespace sonic {

namespace {

std::vector<std::string> normalize(const std::string& text) {
    std::string clean;
    for (unsigned char c : text) {
        clean += std::ispunct(c) ? ' ' : static_cast<char>(std::tolower(c));
    }
    std::vector<std::string> words;
    std::string cur;
    for (char c : clean) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::string strip_zeros(const std::string& digits) {
    const auto nz = digits.find_first_not_of('0');
    return nz == std::string::npos ? "0" : digits.substr(nz);
}

}  // namespace

bool score_exact(const std::string& prediction, const std::string& gold) {
    const auto g = normalize(gold);
    const auto p = normalize(prediction);
    if (g.empty() || p.empty()) return false;
    if (g.size() == 1 && all_digits(g[0])) {
        const std::string want = strip_zeros(g[0]);
        for (const auto& word : p) {
            for (std::size_t i = 0; i < word.size();) {
                if (!std::isdigit(static_cast<unsigned char>(word[i]))) {
                    ++i;
                    continue;
                }
                std::size_t j = i;
                while (j < word.size() && std::isdigit(static_cast<unsigned char>(word[j]))) ++j;
                if (strip_zeros(word.substr(i, j - i)) == want) return true;
                i = j;
            }
        }
        return false;
    }
    return std::search(p.begin(), p.end(), g.begin(), g.end()) != p.end();
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : r.samples) {
        nlohmann::json j{{"prediction", s.prediction}, {"gold", s.gold}, {"correct", s.correct}};
        j["accounting"] = s.accounting ? to_json(*s.accounting) : nlohmann::json(nullptr);
        samples.push_back(std::move(j));
    }
    nlohmann::json j{{"count", r.samples.size()}, {"correct", r.correct}, {"samples", samples}, {"config", r.config}};
    j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
    return j;
}

EvalReport evaluate(std::span<const BenchmarkSample> samples, Predictor& predictor) {
    EvalReport report;
    for (const auto& s : samples) {
        SampleResult r;
        r.prediction = predictor.predict(s);
        r.gold = s.gold;
        r.correct = score_exact(r.prediction, r.gold);
        r.accounting = predictor.accounting(s);
        report.correct += r.correct ? 1 : 0;
        report.samples.push_back(std::move(r));
    }
    if (!samples.empty()) {
        report.accuracy = static_cast<double>(report.correct) / static_cast<double>(samples.size());
    }
    return report;
}

namespace {

int argmax_last(const ForwardTrace& trace) {
    const Matrix& logits = trace.logits.value();
    const auto row = logits.row(logits.rows - 1);
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

template <class Step>
std::vector<int> greedy(AugmentedSequence seq, const ModelParams& params, const DecodeOptions& options, Step mask_for) {
    std::vector<int> out;
    const std::size_t room = static_cast<std::size_t>(params.config.context) - std::min<std::size_t>(
                                 seq.length(), static_cast<std::size_t>(params.config.context));
    const std::size_t cap = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, options.max_new_tokens)), room + 1);
    for (std::size_t n = 0; n < cap; ++n) {
        ForwardOptions opts;
        opts.logit_rows = std::vector<std::size_t>{seq.length() - 1};
        const int tok = argmax_last(forward(params, seq, mask_for(seq), opts));
        out.push_back(tok);
        if (tok == options.stop_token || n + 1 == cap) break;
        seq.append_query_token(tok);
    }
    return out;
}

NexusConfig budget_config(const ModelParams& params, const NexusConfig& nexus, int budget) {
    NexusConfig c = nexus;
    if (!c.allows(budget)) throw BudgetError("budget " + std::to_string(budget) + " is not in the nexus k_set");
    c.k_max = static_cast<int>(params.nexus.pos.rows);
    return c;
}

}  // namespace

std::vector<int> decode_student(const ModelParams& params, const SegmentedConversation& conv, int budget,
                                const NexusConfig& nexus, const DecodeOptions& options) {
    auto seq = insert_nexus(conv, budget, budget_config(params, nexus, budget));
    return greedy(std::move(seq), params, options,
                  [](const AugmentedSequence& s) { return build_mask(s, MaskMode::Inference); });
}

std::vector<int> decode_teacher(const ModelParams& params, const SegmentedConversation& conv,
                                const std::set<std::size_t>& evicted, const DecodeOptions& options) {
    return greedy(plain_sequence(conv), params, options, [&](const AugmentedSequence& s) {
        auto mask = build_mask(s);
        for (std::size_t p = s.query.begin; p < s.length(); ++p) {
            for (std::size_t q : evicted) mask.set(p, q, false);
        }
        return mask;
    });
}

nlohmann::json to_json(const EvalConfig& c) {
    nlohmann::json j{{"policy", policy_name(c.policy.kind)},
                     {"sink", c.policy.sink},
                     {"window", c.policy.window},
                     {"keep", c.policy.keep},
                     {"max_new_tokens", c.max_new_tokens}};
    j["budget"] = c.budget ? nlohmann::json(*c.budget) : nlohmann::json(nullptr);
    j["ratio"] = c.ratio ? nlohmann::json(*c.ratio) : nlohmann::json(nullptr);
    return j;
}

namespace {

class ModelPredictor : public Predictor {
public:
    ModelPredictor(const Checkpoint& ckpt, const Vocabulary& vocab, const EvalConfig& config)
        : ckpt_(ckpt), vocab_(vocab), config_(config) {
        decode_.max_new_tokens = config.max_new_tokens;
        decode_.stop_token = vocab.find(kImEnd).value_or(-1);
        request_.policy = config.policy;
        request_.nexus = ckpt.nexus;
        request_.cost = cost_model_for(ckpt.params.config);
        if (config.policy.kind == PolicyKind::Sonic && !config.budget && !config.ratio) {
            request_.budget = ckpt.nexus.k_default;
        } else {
            request_.budget = config.policy.kind == PolicyKind::Sonic ? config.budget : std::nullopt;
            request_.ratio = config.ratio;
        }
    }

    std::string predict(const BenchmarkSample& sample) override {
        const auto conv = segment(sample.conversation, vocab_);
        if (std::find(conv.tokens.begin(), conv.tokens.end(), vocab_.unk_id()) != conv.tokens.end()) {
            throw VocabMismatchError("dataset contains words outside the checkpoint vocabulary");
        }
        std::optional<Matrix> attention;
        if (needs_attention(request_)) attention = teacher_forward(ckpt_.params, conv).mean_attention();
        last_ = simulate(conv, request_, attention ? &*attention : nullptr);
        std::vector<int> out;
        if (config_.policy.kind == PolicyKind::Sonic) {
            out = decode_student(ckpt_.params, conv, last_->report.budget, ckpt_.nexus, decode_);
        } else {
            std::set<std::size_t> evicted;
            for (const auto& e : last_->ledger.events()) evicted.insert(e.position);
            out = decode_teacher(ckpt_.params, conv, evicted, decode_);
        }
        if (!out.empty() && out.back() == decode_.stop_token) out.pop_back();
        return vocab_.decode(out);
    }

    std::optional<SimReport> accounting(const BenchmarkSample&) override {
        if (!last_) return std::nullopt;
        return last_->report;
    }

private:
    const Checkpoint& ckpt_;
    const Vocabulary& vocab_;
    EvalConfig config_;
    DecodeOptions decode_;
    SimRequest request_;
    std::optional<SimResult> last_;
};

}  // namespace

EvalReport run_eval(const Checkpoint& checkpoint, const Vocabulary& vocab, std::span<const BenchmarkSample> samples,
                    const EvalConfig& config) {
    if (checkpoint.vocab_fingerprint != vocab.fingerprint() || checkpoint.params.vocab_size != vocab.size()) {
        throw VocabMismatchError("checkpoint vocabulary does not match the dataset vocabulary");
    }
    config.policy.validate();
    ModelPredictor predictor(checkpoint, vocab, config);
    auto report = evaluate(samples, predictor);
    report.config = to_json(config);
    return report;
}

double teacher_agreement(const ModelParams& params, const NexusConfig& nexus, std::span<const SegmentedConversation> data,
                         int budget) {
    if (data.empty()) throw UsageError("teacher_agreement: empty dataset");
    const NexusConfig cfg = budget_config(params, nexus, budget);
    std::size_t hits = 0;
    std::size_t total = 0;
    for (const auto& conv : data) {
        const auto plain = plain_sequence(conv);
        const auto seq = insert_nexus(conv, budget, cfg);
        ForwardOptions t_opts, s_opts;
        t_opts.logit_rows.emplace();
        s_opts.logit_rows.emplace();
        for (std::size_t i = 0; i < conv.query.size(); ++i) {
            t_opts.logit_rows->push_back(plain.query.begin + i);
            s_opts.logit_rows->push_back(seq.query.begin + i);
        }
        if (conv.query.empty()) continue;
        const auto t = forward(params, plain, build_mask(plain), t_opts);
        const auto s = forward(params, seq, build_mask(seq, MaskMode::Inference), s_opts);
        const Matrix& tl = t.logits.value();
        const Matrix& sl = s.logits.value();
        for (std::size_t r = 0; r < tl.rows; ++r) {
            const auto a = tl.row(r);
            const auto b = sl.row(r);
            hits += (std::max_element(a.begin(), a.end()) - a.begin()) == (std::max_element(b.begin(), b.end()) - b.begin());
            ++total;
        }
    }
    if (total == 0) throw UsageError("teacher_agreement: no query positions");
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace sonic
