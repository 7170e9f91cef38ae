// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "sonic/benchgen.hpp"
#include "sonic/evalkit.hpp"
#include "sonic/trainer.hpp"

using namespace sonic;

// Larger budgets should not hurt a model trained over the budget set. The
// gap is allowed to be negative within a noise band of 0.05.
TEST(Integration, FullBudgetNotWorseThanSmallBudget) {
    const auto vocab = benchmark_vocabulary();
    GenSpec train_spec;
    train_spec.count = 32;
    train_spec.seed = 21;
    train_spec.distractions = {1, 1};
    train_spec.padding = {1, 2};
    GenSpec eval_spec = train_spec;
    eval_spec.count = 60;
    eval_spec.seed = 77;
    std::vector<SegmentedConversation> train_set, eval_set;
    for (const auto& s : gen_training_set(train_spec)) train_set.push_back(segment(s.conversation, vocab));
    for (const auto& s : gen_coreres(eval_spec)) eval_set.push_back(segment(s.conversation, vocab));
    const NexusConfig nexus;
    std::vector<double> gaps;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        ModelConfig mc;
        mc.dim = 16;
        mc.mlp_hidden = 64;
        mc.init_seed = seed;
        const auto params = init_model(mc, nexus, vocab);
        TrainConfig tc;
        tc.seed = seed;
        tc.steps = 120;
        tc.batch = 2;
        tc.learning_rate = 0.1;
        const auto run = train(params, prepare_items(params, train_set), tc);
        gaps.push_back(teacher_agreement(run.state.params, nexus, eval_set, 64) -
                       teacher_agreement(run.state.params, nexus, eval_set, 4));
    }
    std::sort(gaps.begin(), gaps.end());
    EXPECT_GE(gaps[1], -0.05);
}

// Greedy decoding of a trained checkpoint is reproducible.
TEST(Integration, TrainedModelEvalIsDeterministic) {
    const auto vocab = benchmark_vocabulary();
    GenSpec spec;
    spec.count = 8;
    spec.distractions = {1, 1};
    std::vector<SegmentedConversation> data;
    for (const auto& s : gen_training_set(spec)) data.push_back(segment(s.conversation, vocab));
    ModelConfig mc;
    mc.dim = 16;
    mc.mlp_hidden = 64;
    NexusConfig nexus;
    const auto params = init_model(mc, nexus, vocab);
    TrainConfig tc;
    tc.steps = 10;
    const auto run = train(params, prepare_items(params, data), tc);
    const Checkpoint ck{run.state.params, nexus, vocab.fingerprint()};
    GenSpec es;
    es.count = 3;
    es.distractions = {1, 1};
    const auto samples = gen_coreres(es);
    EvalConfig cfg;
    cfg.budget = 8;
    cfg.max_new_tokens = 4;
    EXPECT_EQ(to_json(run_eval(ck, vocab, samples, cfg)).dump(), to_json(run_eval(ck, vocab, samples, cfg)).dump());
}
