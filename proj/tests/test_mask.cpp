// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "sonic/mask.hpp"
#include "test_support.hpp"

using namespace sonic;

namespace {

AugmentedSequence seq13() {
    return insert_nexus(segment(fixtures::fixture13_transcript(), fixtures::letter_vocab()), 2, fixtures::small_nexus());
}

}  // namespace

TEST(BuildMask, ThirteenTokenExamples) {
    const auto seq = seq13();
    const auto m = build_mask(seq);
    EXPECT_FALSE(m.visible(11, 3));
    EXPECT_TRUE(m.visible(5, 9));
    EXPECT_TRUE(m.visible(6, 3));
    EXPECT_FALSE(m.visible(9, 3));
    EXPECT_TRUE(m.visible(11, 0));
}

TEST(BuildMask, OracleAgreesOnEveryPairOfThirteenTokenInstance) {
    const auto seq = seq13();
    const auto m = build_mask(seq);
    for (std::size_t p = 0; p < 13; ++p) {
        for (std::size_t q = 0; q < 13; ++q) EXPECT_EQ(m.visible(p, q), mask_oracle(seq, p, q)) << p << "," << q;
    }
    EXPECT_TRUE(mask_oracle(seq, 0, 0));
}

TEST(BuildMask, ZeroHistoryIsPlainCausal) {
    const auto v = fixtures::letter_vocab();
    ChatTranscript t;
    t.system = "a b";
    t.query = "c d e";
    const auto seq = insert_nexus(segment(t, v), 2, fixtures::small_nexus());
    const auto m = build_mask(seq);
    for (std::size_t p = 0; p < seq.length(); ++p) {
        for (std::size_t q = 0; q < seq.length(); ++q) {
            EXPECT_EQ(m.visible(p, q), q <= p);
            EXPECT_EQ(mask_oracle(seq, p, q), q <= p);
        }
    }
}

TEST(BuildMask, StructuralInvariantsOnRandomConversations) {
    const auto v = fixtures::letter_vocab();
    const auto cfg = fixtures::small_nexus();
    std::mt19937_64 rng(8);
    for (int n = 0; n < 40; ++n) {
        const auto seq = insert_nexus(segment(fixtures::random_transcript(rng, 4, 7), v), 1 + n % 4, cfg);
        const auto m = build_mask(seq);
        const std::size_t L = seq.length();
        for (std::size_t p = 0; p < L; ++p) {
            EXPECT_TRUE(m.visible(p, p));
            for (std::size_t q = 0; q < L; ++q) {
                const bool text_p = !seq.is_nexus(p), text_q = !seq.is_nexus(q);
                if (text_p && text_q && q > p) {
                    EXPECT_FALSE(m.visible(p, q));
                }
                // Text never sees a future Nexus.
                if (text_p && !text_q && q > p) {
                    EXPECT_FALSE(m.visible(p, q));
                }
                if (!text_p && !text_q) {
                    EXPECT_TRUE(m.visible(p, q));
                }
            }
        }
        // Query never sees any historical body.
        for (std::size_t p = seq.query.begin; p < seq.query.end; ++p) {
            for (const auto& b : seq.bodies) {
                for (std::size_t q = b.begin; q < b.end; ++q) EXPECT_FALSE(m.visible(p, q));
            }
        }
        // Monotone revocation for text rows.
        for (std::size_t q = 0; q < L; ++q) {
            if (seq.tags[q].kind != TagKind::Body) continue;
            bool revoked = false;
            for (std::size_t p = q; p < L; ++p) {
                if (seq.is_nexus(p)) continue;
                if (revoked) {
                    EXPECT_FALSE(m.visible(p, q));
                }
                if (!m.visible(p, q)) revoked = true;
            }
        }
    }
}

TEST(BuildMask, InferenceModeLimitsNexusToOwnAndEarlierRuns) {
    const auto seq = seq13();
    const auto train = build_mask(seq, MaskMode::Training);
    const auto infer = build_mask(seq, MaskMode::Inference);
    EXPECT_TRUE(train.visible(5, 9));
    EXPECT_FALSE(infer.visible(5, 9));
    EXPECT_TRUE(infer.visible(9, 5));
    EXPECT_TRUE(infer.visible(5, 6));
    // Text rows agree between the modes.
    for (std::size_t p : {0u, 3u, 7u, 11u, 12u}) {
        for (std::size_t q = 0; q < 13; ++q) EXPECT_EQ(train.visible(p, q), infer.visible(p, q));
    }
}

TEST(DumpMask, ThirteenTokenShape) {
    const auto seq = seq13();
    std::ostringstream out;
    dump_mask(seq, build_mask(seq), out);
    std::istringstream in(out.str());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 26u);
    EXPECT_EQ(lines[5], "@5/13 NEXUS 1 1 1");
    for (std::size_t r = 13; r < 26; ++r) EXPECT_EQ(lines[r].size(), 13u);
    std::ostringstream again;
    dump_mask(seq, build_mask(seq), again);
    EXPECT_EQ(out.str(), again.str());
}

TEST(DumpMask, QueryOnlyLowerTriangular) {
    const auto v = fixtures::letter_vocab();
    ChatTranscript t;
    t.query = "a b c";
    const auto seq = plain_sequence(segment(t, v));
    std::ostringstream out;
    dump_mask(seq, build_mask(seq), out);
    EXPECT_EQ(out.str(), "@0/3 QUERY\n@1/3 QUERY\n@2/3 QUERY\n100\n110\n111\n");
}
