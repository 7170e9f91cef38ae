// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sonic/cache.hpp"
#include "sonic/errors.hpp"
#include "test_support.hpp"

using namespace sonic;

namespace {

SimRequest sonic_request(int k) {
    SimRequest r;
    r.policy.kind = PolicyKind::Sonic;
    r.budget = k;
    return r;
}

SimRequest baseline(PolicyKind kind) {
    SimRequest r;
    r.policy.kind = kind;
    return r;
}

}  // namespace

TEST(Simulate, WorkedExampleSonicVsFull) {
    const auto conv = uniform_conversation(50, 60, 50, 50);
    const auto sonic = simulate(conv, sonic_request(16)).report;
    EXPECT_EQ(sonic.attended_at_decode, 50u + 60u * 16u + 50u);
    EXPECT_EQ(sonic.attended_at_decode, 1060u);
    EXPECT_EQ(sonic.original_history, 3000u);
    EXPECT_EQ(sonic.retained_history, 960u);
    EXPECT_DOUBLE_EQ(sonic.compression_ratio, 1.0 - 960.0 / 3000.0);
    const auto full = simulate(conv, baseline(PolicyKind::Full)).report;
    EXPECT_EQ(full.attended_at_decode, 3100u);
    EXPECT_EQ(full.compression_ratio, 0.0);
    EXPECT_EQ(full.evictions, 0u);
}

TEST(Simulate, SinkWindowKeepsSinkPlusWindow) {
    const auto conv = uniform_conversation(50, 60, 50, 50);
    auto req = baseline(PolicyKind::SinkWindow);
    req.policy.sink = 4;
    req.policy.window = 100;
    const auto r = simulate(conv, req).report;
    EXPECT_EQ(r.retained_history, 104u);
    EXPECT_EQ(r.attended_at_decode, 50u + 104u + 50u);
}

TEST(Simulate, SmallSonicRatio) {
    const auto conv = uniform_conversation(5, 4, 10, 3);
    const auto r = simulate(conv, sonic_request(8)).report;
    EXPECT_EQ(r.retained_history, 32u);
    EXPECT_DOUBLE_EQ(r.compression_ratio, 0.2);
}

TEST(Simulate, RatioSelectsLargestBudgetMeetingIt) {
    const auto conv = uniform_conversation(50, 60, 50, 50);
    SimRequest req;
    req.policy.kind = PolicyKind::Sonic;
    req.ratio = 0.9;
    const auto r = simulate(conv, req).report;
    EXPECT_EQ(r.budget, 4);
    EXPECT_FALSE(r.ratio_unreachable);
    EXPECT_GE(r.compression_ratio, 0.9);
    req.ratio = 0.99;
    const auto u = simulate(conv, req).report;
    EXPECT_TRUE(u.ratio_unreachable);
    EXPECT_EQ(u.budget, 4);
    req.budget = 8;
    EXPECT_THROW(simulate(conv, req), UsageError);
    req.budget.reset();
    req.ratio.reset();
    EXPECT_THROW(simulate(conv, req), UsageError);
}

TEST(Simulate, BaselineRatioSizesRetainedHistory) {
    const auto conv = uniform_conversation(10, 6, 10, 5);
    auto req = baseline(PolicyKind::SinkWindow);
    req.ratio = 0.75;
    EXPECT_EQ(simulate(conv, req).report.retained_history, 15u);
}

TEST(Ledger, SonicEvictionClock) {
    const auto v = fixtures::letter_vocab();
    std::mt19937_64 rng(4);
    for (int n = 0; n < 20; ++n) {
        const auto conv = segment(fixtures::random_transcript(rng, 4, 6), v);
        auto req = sonic_request(1 + n % 4);
        req.nexus = fixtures::small_nexus();
        const auto res = simulate(conv, req);
        const auto& seq = res.sequence;
        for (std::size_t i = 0; i < seq.bodies.size(); ++i) {
            for (std::size_t p = seq.bodies[i].begin; p < seq.bodies[i].end; ++p) {
                const auto& e = res.ledger.entries()[p];
                ASSERT_TRUE(e.evicted_at.has_value());
                EXPECT_EQ(*e.evicted_at, seq.nexus[i].end);
            }
        }
        for (std::size_t p = seq.sys.begin; p < seq.sys.end; ++p) EXPECT_TRUE(res.ledger.entries()[p].resident);
        for (const auto& ev : res.ledger.events()) EXPECT_FALSE(res.ledger.entries()[ev.position].resident);
    }
}

TEST(Ledger, ResidencyMatchesQueryVisibility) {
    const auto v = fixtures::letter_vocab();
    std::mt19937_64 rng(5);
    for (int n = 0; n < 50; ++n) {
        const auto conv = segment(fixtures::random_transcript(rng, 4, 6), v);
        const int k = 1 + n % 4;
        auto req = sonic_request(k);
        req.nexus = fixtures::small_nexus();
        const auto res = simulate(conv, req);
        const auto& seq = res.sequence;
        const std::size_t last = seq.query.end - 1;
        for (auto mode : {MaskMode::Training, MaskMode::Inference}) {
            const auto mask = build_mask(seq, mode);
            std::vector<std::size_t> visible;
            for (std::size_t q = 0; q <= last; ++q) {
                if (mask.visible(last, q)) visible.push_back(q);
            }
            EXPECT_EQ(res.ledger.resident_positions(), visible);
        }
    }
}

TEST(Ledger, ConservationAtEveryClock) {
    KVLedger ledger;
    PositionTag body{TagKind::Body, 0, 0, 1};
    for (int i = 0; i < 10; ++i) {
        ledger.append(body);
        if (i % 3 == 2) ledger.evict(static_cast<std::size_t>(i - 1));
        EXPECT_EQ(ledger.resident_count() + ledger.evicted_count(), ledger.clock());
    }
    const std::size_t evicted = ledger.evicted_count();
    ledger.evict(1);
    EXPECT_EQ(ledger.evicted_count(), evicted);
    EXPECT_THROW(ledger.evict(99), IndexError);
}

TEST(CompressionRatio, Definitions) {
    KVLedger ledger;
    PositionTag body{TagKind::Body, 0, 0, 1};
    for (int i = 0; i < 100; ++i) ledger.append(body);
    EXPECT_EQ(compression_ratio(ledger), 0.0);
    for (std::size_t p = 20; p < 100; ++p) ledger.evict(p);
    EXPECT_DOUBLE_EQ(compression_ratio(ledger), 0.8);
    KVLedger empty;
    empty.append(PositionTag{TagKind::Sys, -1, 0, 0});
    EXPECT_EQ(compression_ratio(empty), 0.0);
}

TEST(Simulate, AttendedCountMonotoneInBudget) {
    const auto conv = uniform_conversation(3, 8, 12, 4);
    std::size_t prev = 0;
    for (int k : {4, 8, 16, 32, 64}) {
        const auto r = simulate(conv, sonic_request(k)).report;
        EXPECT_GE(r.attended_at_decode, prev);
        prev = r.attended_at_decode;
    }
}

TEST(AccumAttention, UniformKeepsEarliest) {
    Matrix attn(6, 6, 1.0);
    const std::vector<std::size_t> history{1, 2, 3, 4};
    EXPECT_EQ(accum_attention_evict(attn, history, 2), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(accum_attention_evict(attn, history, 10), history);
}

TEST(AccumAttention, DominantColumnAlwaysKept) {
    Matrix attn(6, 6, 0.1);
    for (std::size_t r = 0; r < 6; ++r) attn(r, 4) = 5.0;
    const std::vector<std::size_t> history{1, 2, 3, 4};
    for (int keep = 1; keep <= 4; ++keep) {
        const auto kept = accum_attention_evict(attn, history, keep);
        EXPECT_TRUE(std::find(kept.begin(), kept.end(), 4u) != kept.end());
    }
}

TEST(AccumAttention, MatchesIndependentTopK) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix attn(12, 12);
        for (auto& x : attn.data) x = std::round(u(rng) * 4.0) / 4.0;
        std::vector<std::size_t> history{2, 3, 4, 5, 7, 8, 9};
        const int keep = 1 + trial % 6;
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t q : history) {
            double s = 0.0;
            for (std::size_t r = 0; r < 12; ++r) s += attn(r, q);
            scored.push_back({-s, q});
        }
        std::sort(scored.begin(), scored.end());
        std::vector<std::size_t> expected;
        for (int i = 0; i < keep; ++i) expected.push_back(scored[static_cast<std::size_t>(i)].second);
        std::sort(expected.begin(), expected.end());
        EXPECT_EQ(accum_attention_evict(attn, history, keep), expected);
    }
}

TEST(Simulate, AccumNeedsTrace) {
    const auto conv = uniform_conversation(2, 2, 3, 2);
    auto req = baseline(PolicyKind::AccumAttention);
    req.policy.keep = 2;
    EXPECT_TRUE(needs_attention(req));
    EXPECT_THROW(simulate(conv, req), UsageError);
    const std::size_t L = conv.tokens.size();
    Matrix attn(L, L, 1.0);
    const auto r = simulate(conv, req, &attn).report;
    EXPECT_EQ(r.retained_history, 2u);
}

TEST(Policy, ParsingAndValidation) {
    EXPECT_EQ(parse_policy("h2o_like"), PolicyKind::AccumAttention);
    EXPECT_EQ(parse_policy("sonic"), PolicyKind::Sonic);
    EXPECT_THROW(parse_policy("lru"), ConfigError);
    EvictionPolicy p;
    p.kind = PolicyKind::SinkWindow;
    p.window = 0;
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(CostModel, BytesPerPosition) {
    CostModel c{2, 4, 8, 8};
    EXPECT_EQ(c.bytes_per_position(), 2u * 4u * 8u * 2u * 8u);
    const auto conv = uniform_conversation(50, 60, 50, 50);
    auto req = sonic_request(16);
    req.cost = c;
    const auto r = simulate(conv, req).report;
    EXPECT_EQ(r.peak_bytes, r.peak_resident * c.bytes_per_position());
}
