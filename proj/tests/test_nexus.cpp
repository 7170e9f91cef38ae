// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "sonic/errors.hpp"
#include "sonic/nexus.hpp"
#include "test_support.hpp"

using namespace sonic;

namespace {

SegmentedConversation fixture13() { return segment(fixtures::fixture13_transcript(), fixtures::letter_vocab()); }

}  // namespace

TEST(InsertNexus, ZeroHistoryIsUnchanged) {
    const auto v = fixtures::letter_vocab();
    ChatTranscript t;
    t.system = "a";
    t.query = "b c";
    const auto conv = segment(t, v);
    const auto seq = insert_nexus(conv, 2, fixtures::small_nexus());
    EXPECT_EQ(seq.tokens, conv.tokens);
    EXPECT_EQ(seq.nexus_count(), 0u);
}

TEST(InsertNexus, ThirteenTokenLayout) {
    const auto seq = insert_nexus(fixture13(), 2, fixtures::small_nexus());
    ASSERT_EQ(seq.length(), 13u);
    std::vector<std::size_t> nexus;
    for (std::size_t p = 0; p < seq.length(); ++p) {
        if (seq.is_nexus(p)) nexus.push_back(p);
    }
    EXPECT_EQ(nexus, (std::vector<std::size_t>{5, 6, 9, 10}));
    EXPECT_EQ(seq.tags[9].segment, 1);
    EXPECT_EQ(seq.tags[9].slot, 1);
    EXPECT_EQ(seq.tags[10].slot, 2);
    EXPECT_EQ(seq.tags[10].turn, 1);
    EXPECT_EQ(seq.query, (Span{11, 13}));
}

TEST(InsertNexus, ShortBodyReducesBudget) {
    const auto v = fixtures::letter_vocab();
    ChatTranscript t;
    t.turns = {{"a", "b c d e f"}};
    t.query = "g";
    const auto seq = insert_nexus(segment(t, v), 4, fixtures::small_nexus());
    EXPECT_EQ(seq.nexus[0].size(), 1u);
    EXPECT_EQ(seq.nexus[1].size(), 4u);
}

TEST(InsertNexus, BudgetOutsideSetIsRejected) {
    EXPECT_THROW(insert_nexus(fixture13(), 5, fixtures::small_nexus()), BudgetError);
}

TEST(InsertNexus, LengthArithmeticAndStripRoundTrip) {
    const auto v = fixtures::letter_vocab();
    const auto cfg = fixtures::small_nexus();
    std::mt19937_64 rng(4);
    for (int n = 0; n < 50; ++n) {
        const auto conv = segment(fixtures::random_transcript(rng), v);
        for (int k : cfg.k_set) {
            const auto seq = insert_nexus(conv, k, cfg);
            std::size_t expect = conv.sys.size() + conv.query.size();
            for (const auto& s : conv.segments) expect += s.body.size() + std::min<std::size_t>(k, s.body.size());
            ASSERT_EQ(seq.length(), expect);
            for (std::size_t i = 0; i < seq.segments.size(); ++i) {
                // Nexus run directly follows its body, slots 1..K_i, own turn id.
                EXPECT_EQ(seq.nexus[i].begin, seq.bodies[i].end);
                for (std::size_t p = seq.nexus[i].begin; p < seq.nexus[i].end; ++p) {
                    EXPECT_EQ(seq.tags[p].slot, static_cast<int>(p - seq.nexus[i].begin + 1));
                    EXPECT_EQ(seq.tags[p].turn, conv.segments[i].turn_id);
                }
            }
            EXPECT_EQ(strip_nexus(seq), conv);
        }
    }
}

TEST(InsertNexus, TurnBeyondTableIsRejected) {
    const auto v = fixtures::letter_vocab();
    ChatTranscript t;
    for (int k = 0; k < 3; ++k) t.turns.push_back({"a", "b"});
    t.query = "c";
    EXPECT_THROW(insert_nexus(segment(t, v), 1, fixtures::small_nexus({1}, 4, 2)), IndexError);
}

TEST(ComposeEmbedding, ZeroBaseGivesPositionPlusTurn) {
    NexusEmbeddings e{Matrix(1, 3, 0.0), Matrix(4, 3, 1.0), Matrix(4, 3, 2.0)};
    EXPECT_EQ(compose_embedding(e, 2, 3), (std::vector<double>{3.0, 3.0, 3.0}));
}

TEST(ComposeEmbedding, AllOnesDimFour) {
    NexusEmbeddings e{Matrix(1, 4, 1.0), Matrix(2, 4, 1.0), Matrix(2, 4, 1.0)};
    EXPECT_EQ(compose_embedding(e, 1, 1), (std::vector<double>{3.0, 3.0, 3.0, 3.0}));
}

TEST(ComposeEmbedding, MatchesElementwiseSum) {
    std::mt19937_64 rng(11);
    NexusEmbeddings e{Matrix::randn(1, 6, 1.0, rng), Matrix::randn(5, 6, 1.0, rng), Matrix::randn(4, 6, 1.0, rng)};
    const auto got = compose_embedding(e, 2, 3);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(got[c], e.base(0, c) + e.pos(1, c) + e.turn(2, c));
}

TEST(ComposeEmbedding, OutOfRangeSlotOrTurn) {
    NexusEmbeddings e{Matrix(1, 2), Matrix(2, 2), Matrix(3, 2)};
    EXPECT_THROW(compose_embedding(e, 0, 1), IndexError);
    EXPECT_THROW(compose_embedding(e, 3, 1), IndexError);
    EXPECT_THROW(compose_embedding(e, 1, 4), IndexError);
}

TEST(BaseEmbedding, KeywordAverage) {
    const auto v = fixtures::letter_vocab();
    Matrix table(v.size(), 2, 0.0);
    for (std::size_t c = 0; c < 2; ++c) {
        table(static_cast<std::size_t>(v.id("summary")), c) = 1.0;
        table(static_cast<std::size_t>(v.id("condensed")), c) = 3.0;
    }
    EXPECT_EQ(init_base_embedding(v, table, NexusConfig{}, BaseInit::KeywordAverage), (std::vector<double>{2.0, 2.0}));
}

TEST(BaseEmbedding, FourKeywordsMatchColumnMeans) {
    const auto v = fixtures::letter_vocab();
    std::mt19937_64 rng(2);
    const Matrix table = Matrix::randn(v.size(), 8, 1.0, rng);
    NexusConfig cfg;
    cfg.keywords = {"summary", "condensed", "a", "b"};
    const auto got = init_base_embedding(v, table, cfg, BaseInit::KeywordAverage);
    for (std::size_t c = 0; c < 8; ++c) {
        double s = 0.0;
        for (const auto& k : cfg.keywords) s += table(static_cast<std::size_t>(v.id(k)), c);
        EXPECT_NEAR(got[c], s / 4.0, 1e-15);
    }
}

TEST(BaseEmbedding, SeededRandomIsDeterministic) {
    const auto v = fixtures::letter_vocab();
    const Matrix table(v.size(), 4, 0.0);
    NexusConfig cfg;
    cfg.base_seed = 42;
    EXPECT_EQ(init_base_embedding(v, table, cfg, BaseInit::SeededRandom),
              init_base_embedding(v, table, cfg, BaseInit::SeededRandom));
}

TEST(BaseEmbedding, MissingKeywordIsConfigError) {
    const auto v = fixtures::letter_vocab();
    NexusConfig cfg;
    cfg.keywords = {"summary", "absent"};
    EXPECT_THROW(init_base_embedding(v, Matrix(v.size(), 2), cfg, BaseInit::KeywordAverage), ConfigError);
}

TEST(NexusConfig, ValidationAndJsonRoundTrip) {
    NexusConfig bad;
    bad.k_set = {4, 128};
    EXPECT_THROW(bad.validate(), ConfigError);
    NexusConfig no_default;
    no_default.k_default = 5;
    EXPECT_THROW(no_default.validate(), ConfigError);
    NexusConfig c = fixtures::small_nexus();
    EXPECT_EQ(nexus_config_from_json(to_json(c)), c);
}
