// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "sonic/benchgen.hpp"
#include "sonic/errors.hpp"
#include "sonic/evalkit.hpp"
#include "test_support.hpp"

using namespace sonic;

namespace {

class FixedPredictor : public Predictor {
public:
    explicit FixedPredictor(std::vector<std::string> answers) : answers_(std::move(answers)) {}
    std::string predict(const BenchmarkSample&) override { return answers_.at(next_++); }

private:
    std::vector<std::string> answers_;
    std::size_t next_ = 0;
};

std::vector<BenchmarkSample> small_coreres(int n) {
    GenSpec spec;
    spec.count = n;
    spec.seed = 3;
    spec.distractions = {1, 2};
    return gen_coreres(spec);
}

Checkpoint toy_checkpoint(const Vocabulary& v) {
    ModelConfig m = fixtures::small_model(16, 5);
    m.context = 256;
    NexusConfig n = fixtures::small_nexus({2, 4}, 8, 8);
    return {init_model(m, n, v), n, v.fingerprint()};
}

}  // namespace

TEST(ScoreExact, NormalizationRules) {
    EXPECT_TRUE(score_exact("500 credits", "500"));
    EXPECT_TRUE(score_exact("It was 500.", "500"));
    EXPECT_FALSE(score_exact("", "500"));
    EXPECT_FALSE(score_exact("fifty", "50"));
    EXPECT_FALSE(score_exact("5000 credits", "500"));
    EXPECT_TRUE(score_exact("The status is LOCKED!", "locked"));
    EXPECT_TRUE(score_exact("it is the blue door", "Blue door"));
    EXPECT_FALSE(score_exact("blue", "blue door"));
    EXPECT_FALSE(score_exact("anything", ""));
}

TEST(Evaluate, OraclePredictorIsPerfect) {
    const auto samples = small_coreres(12);
    OraclePredictor oracle;
    const auto r = evaluate(samples, oracle);
    EXPECT_EQ(r.correct, 12u);
    ASSERT_TRUE(r.accuracy.has_value());
    EXPECT_EQ(*r.accuracy, 1.0);
}

TEST(Evaluate, EmptyDatasetHasNullAccuracy) {
    OraclePredictor oracle;
    const auto r = evaluate(std::span<const BenchmarkSample>{}, oracle);
    EXPECT_EQ(r.correct, 0u);
    EXPECT_FALSE(r.accuracy.has_value());
    const auto j = to_json(r);
    EXPECT_TRUE(j.at("accuracy").is_null());
}

TEST(Evaluate, AccuracyEqualsRecount) {
    const auto samples = small_coreres(4);
    FixedPredictor p({samples[0].gold, "no idea", samples[2].gold + " units", "0"});
    const auto r = evaluate(samples, p);
    std::size_t recount = 0;
    for (const auto& s : r.samples) recount += s.correct ? 1 : 0;
    EXPECT_EQ(recount, r.correct);
    EXPECT_EQ(r.correct, 2u);
    EXPECT_DOUBLE_EQ(*r.accuracy, 0.5);
}

TEST(RunEval, DeterministicReports) {
    const Vocabulary v = benchmark_vocabulary();
    const Checkpoint ck = toy_checkpoint(v);
    const auto samples = small_coreres(3);
    EvalConfig cfg;
    cfg.budget = 4;
    cfg.max_new_tokens = 3;
    const auto a = run_eval(ck, v, samples, cfg);
    const auto b = run_eval(ck, v, samples, cfg);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    ASSERT_EQ(a.samples.size(), 3u);
    for (const auto& s : a.samples) {
        ASSERT_TRUE(s.accounting.has_value());
        EXPECT_EQ(s.accounting->budget, 4);
    }
    EXPECT_EQ(a.config.at("budget"), 4);
}

TEST(RunEval, BaselinePoliciesProduceAccounting) {
    const Vocabulary v = benchmark_vocabulary();
    const Checkpoint ck = toy_checkpoint(v);
    const auto samples = small_coreres(2);
    for (auto kind : {PolicyKind::Full, PolicyKind::SinkWindow, PolicyKind::AccumAttention}) {
        EvalConfig cfg;
        cfg.policy.kind = kind;
        cfg.policy.window = 10;
        cfg.policy.keep = 12;
        cfg.max_new_tokens = 2;
        const auto r = run_eval(ck, v, samples, cfg);
        for (const auto& s : r.samples) {
            ASSERT_TRUE(s.accounting.has_value());
            EXPECT_EQ(s.accounting->policy, policy_name(kind));
        }
    }
}

TEST(RunEval, VocabularyMismatchIsHardError) {
    const Vocabulary v = benchmark_vocabulary();
    const Checkpoint ck = toy_checkpoint(v);
    const auto samples = small_coreres(1);
    const Vocabulary other = fixtures::letter_vocab();
    EXPECT_THROW(run_eval(ck, other, samples, EvalConfig{}), VocabMismatchError);
    // Same vocabulary, but the data uses words it lacks.
    BenchmarkSample odd = samples[0];
    odd.conversation.query = "zyzzyva quux";
    const std::vector<BenchmarkSample> bad{odd};
    EvalConfig cfg;
    cfg.budget = 2;
    EXPECT_THROW(run_eval(ck, v, bad, cfg), VocabMismatchError);
}

TEST(Decode, ZeroHistoryStudentMatchesTeacher) {
    const auto v = fixtures::letter_vocab();
    const auto n = fixtures::small_nexus();
    const auto params = init_model(fixtures::small_model(), n, v);
    ChatTranscript t;
    t.system = "a b c";
    t.query = "d e f";
    const auto conv = segment(t, v);
    DecodeOptions opts;
    opts.max_new_tokens = 5;
    EXPECT_EQ(decode_student(params, conv, 2, n, opts), decode_teacher(params, conv, {}, opts));
    EXPECT_EQ(decode_student(params, conv, 2, n, opts).size(), 5u);
    EXPECT_THROW(decode_student(params, conv, 7, n, opts), BudgetError);
}

TEST(Decode, StopTokenEndsGeneration) {
    const auto v = fixtures::letter_vocab();
    const auto n = fixtures::small_nexus();
    const auto params = init_model(fixtures::small_model(), n, v);
    const auto conv = segment(fixtures::fixture13_transcript(), v);
    DecodeOptions opts;
    opts.max_new_tokens = 6;
    const auto free_run = decode_student(params, conv, 2, n, opts);
    opts.stop_token = free_run.front();
    EXPECT_EQ(decode_student(params, conv, 2, n, opts).size(), 1u);
}

TEST(TeacherAgreement, ZeroHistoryIsOneAndRangeChecked) {
    const auto v = fixtures::letter_vocab();
    const auto n = fixtures::small_nexus();
    const auto params = init_model(fixtures::small_model(), n, v);
    ChatTranscript t;
    t.query = "a b c d";
    const std::vector<SegmentedConversation> data{segment(t, v)};
    EXPECT_EQ(teacher_agreement(params, n, data, 2), 1.0);
    std::mt19937_64 rng(2);
    std::vector<SegmentedConversation> mixed;
    for (int i = 0; i < 10; ++i) mixed.push_back(segment(fixtures::random_transcript(rng), v));
    const double a = teacher_agreement(params, n, mixed, 4);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    EXPECT_THROW(teacher_agreement(params, n, std::span<const SegmentedConversation>{}, 2), UsageError);
}
