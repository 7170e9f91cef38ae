// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "sonic/errors.hpp"
#include "sonic/losses.hpp"
#include "test_support.hpp"

using namespace sonic;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
    Matrix m(values.size(), values.begin()->size());
    std::size_t r = 0;
    for (const auto& row : values) {
        std::size_t c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

// Hand-built trace: hidden[0] only, one attention head, logits for every row.
ForwardTrace fake_trace(const Matrix& logits, const Matrix& hidden, const Matrix& attention) {
    ForwardTrace t;
    t.graph = std::make_unique<ag::Graph>();
    t.length = hidden.rows;
    t.hidden.push_back(t.graph->constant(hidden));
    t.attention.push_back({t.graph->constant(attention)});
    for (std::size_t r = 0; r < logits.rows; ++r) t.logit_rows.push_back(r);
    t.logits = t.graph->constant(logits);
    return t;
}

ForwardTrace fake_trace(const Matrix& logits) {
    return fake_trace(logits, Matrix(logits.rows, 2, 1.0), Matrix(logits.rows, logits.rows, 0.0));
}

AlignmentMap identity_map(std::size_t n) {
    AlignmentMap m;
    for (std::size_t i = 0; i < n; ++i) m.pairs.push_back({i, i, 1.0});
    return m;
}

}  // namespace

TEST(Align, ThirteenTokenFixture) {
    const auto v = fixtures::letter_vocab();
    const auto conv = segment(fixtures::fixture13_transcript(), v);
    const auto map = align(plain_sequence(conv), insert_nexus(conv, 2, fixtures::small_nexus()));
    ASSERT_EQ(map.size(), 4u);
    const std::pair<std::size_t, std::size_t> expected[] = {{0, 0}, {1, 1}, {7, 11}, {8, 12}};
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(map.pairs[k].teacher, expected[k].first);
        EXPECT_EQ(map.pairs[k].student, expected[k].second);
    }
}

TEST(Align, MismatchedTokensAreRejected) {
    const auto v = fixtures::letter_vocab();
    const auto conv = segment(fixtures::fixture13_transcript(), v);
    auto student = insert_nexus(conv, 2, fixtures::small_nexus());
    student.tokens[12] = v.id("z");
    EXPECT_THROW(align(plain_sequence(conv), student), AlignmentError);
    auto shorter = insert_nexus(conv, 2, fixtures::small_nexus());
    shorter.query.end -= 1;
    EXPECT_THROW(align(plain_sequence(conv), shorter), AlignmentError);
}

TEST(LossKd, TwoClassExample) {
    auto teacher = fake_trace(rows({{0.0, 0.0}}));
    auto student = fake_trace(rows({{std::log(3.0), 0.0}}));
    const double kd = loss_kd(teacher, student, identity_map(1), 1.0).scalar();
    EXPECT_NEAR(kd, 0.143841, 1e-6);
    EXPECT_NEAR(kd, 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25), 1e-15);
}

TEST(LossKd, IdenticalLogitsGiveZeroAtEveryTemperature) {
    const Matrix z = rows({{1.0, -2.0, 0.5}, {3.0, 3.0, -1.0}});
    for (double tau : {0.5, 1.0, 3.0}) {
        auto a = fake_trace(z);
        auto b = fake_trace(z);
        EXPECT_EQ(loss_kd(a, b, identity_map(2), tau).scalar(), 0.0);
    }
}

TEST(LossKd, ScalesWithTauSquared) {
    auto teacher = fake_trace(rows({{0.0, 0.0}}));
    auto student = fake_trace(rows({{2.0 * std::log(3.0), 0.0}}));
    EXPECT_NEAR(loss_kd(teacher, student, identity_map(1), 2.0).scalar(), 4.0 * 0.143841, 4e-6);
}

TEST(LossHidden, OrthogonalAndOppositeStates) {
    const Matrix logits(1, 2, 0.0);
    const Matrix attn(1, 1, 1.0);
    auto teacher = fake_trace(logits, rows({{1.0, 0.0}}), attn);
    auto ortho = fake_trace(logits, rows({{0.0, 2.0}}), attn);
    auto opposite = fake_trace(logits, rows({{-3.0, 0.0}}), attn);
    auto same = fake_trace(logits, rows({{5.0, 0.0}}), attn);
    EXPECT_NEAR(loss_hidden(teacher, ortho, identity_map(1), -1).scalar(), 1.0, 1e-15);
    EXPECT_NEAR(loss_hidden(teacher, opposite, identity_map(1), -1).scalar(), 2.0, 1e-15);
    EXPECT_NEAR(loss_hidden(teacher, same, identity_map(1), -1).scalar(), 0.0, 1e-15);
    auto zero = fake_trace(logits, rows({{0.0, 0.0}}), attn);
    EXPECT_THROW(loss_hidden(teacher, zero, identity_map(1), -1), NumericalError);
}

TEST(ImportanceWeights, NormalizedToMeanOne) {
    // Teacher rows 0 and 1 place 0.2 and 0.6 on the body at positions 2..3.
    Matrix attn(4, 4, 0.0);
    attn(0, 2) = 0.1;
    attn(0, 3) = 0.1;
    attn(0, 0) = 0.8;
    attn(1, 3) = 0.6;
    attn(1, 1) = 0.4;
    auto teacher = fake_trace(Matrix(4, 2, 0.0), Matrix(4, 2, 1.0), attn);
    AugmentedSequence seq;
    seq.bodies.push_back({2, 4});
    const auto map = importance_weights(teacher, seq, identity_map(2));
    EXPECT_NEAR(map.pairs[0].weight, 0.5, 1e-12);
    EXPECT_NEAR(map.pairs[1].weight, 1.5, 1e-12);
    AugmentedSequence empty;
    const auto uniform = importance_weights(teacher, empty, identity_map(2));
    EXPECT_EQ(uniform.pairs[0].weight, 1.0);
    EXPECT_EQ(uniform.pairs[1].weight, 1.0);
}

TEST(LossAkd, WeightsSelectPositions) {
    auto teacher = fake_trace(rows({{0.0, 0.0}, {0.0, 0.0}}));
    auto student = fake_trace(rows({{std::log(3.0), 0.0}, {5.0, -5.0}}));
    AlignmentMap map = identity_map(2);
    map.pairs[0].weight = 2.0;
    map.pairs[1].weight = 0.0;
    const double tau = 1.0;
    const double a = loss_kd(teacher, student, identity_map(1), tau).scalar();
    EXPECT_NEAR(loss_akd(teacher, student, map, tau).scalar(), tau * tau * 2.0 * a, 1e-12);
}

TEST(NexusAttention, AveragesQueryMassOnNexus) {
    // Positions: 0 body, 1 nexus, 2..3 query.
    Matrix attn(4, 4, 0.0);
    attn(2, 1) = 0.3;
    attn(2, 2) = 0.7;
    attn(3, 1) = 0.5;
    attn(3, 3) = 0.5;
    auto student = fake_trace(Matrix(4, 2, 0.0), Matrix(4, 2, 1.0), attn);
    AugmentedSequence seq;
    seq.nexus.push_back({1, 2});
    seq.query = {2, 4};
    const auto a = nexus_attention(student, seq);
    EXPECT_FALSE(a.missing);
    EXPECT_NEAR(a.value.scalar(), 0.4, 1e-15);
    AugmentedSequence none;
    none.query = {2, 4};
    EXPECT_TRUE(nexus_attention(student, none).missing);
    EXPECT_EQ(nexus_attention(student, none).value.scalar(), 0.0);
}

TEST(LossReg, HingeCases) {
    ag::Graph g;
    EXPECT_NEAR(loss_reg(g.constant(Matrix(1, 1, 0.05)), 0.1).scalar(), 0.05, 1e-15);
    EXPECT_EQ(loss_reg(g.constant(Matrix(1, 1, 0.4)), 0.1).scalar(), 0.0);
    EXPECT_EQ(loss_reg(g.constant(Matrix(1, 1, 0.1)), 0.1).scalar(), 0.0);
    EXPECT_NEAR(loss_reg(g.constant(Matrix(1, 1, 0.0)), 0.1).scalar(), 0.1, 1e-15);
}

TEST(PartitionBody, SizesDifferByAtMostOne) {
    auto sizes = [](Span body, int k) {
        std::vector<std::size_t> out;
        std::size_t at = body.begin;
        for (const auto& s : partition_body(body, k)) {
            EXPECT_EQ(s.begin, at);
            at = s.end;
            out.push_back(s.size());
        }
        EXPECT_EQ(at, body.end);
        return out;
    };
    EXPECT_EQ(sizes({0, 7}, 3), (std::vector<std::size_t>{3, 2, 2}));
    EXPECT_EQ(sizes({5, 15}, 4), (std::vector<std::size_t>{3, 3, 2, 2}));
    EXPECT_EQ(sizes({2, 4}, 2), (std::vector<std::size_t>{1, 1}));
    EXPECT_THROW(partition_body({0, 2}, 3), PartitionError);
    EXPECT_THROW(partition_body({0, 2}, 0), PartitionError);
}

TEST(ReconTarget, HandComputedCase) {
    // Nexus state (1, 0); interval states (1, 0) and (0, 1): cosines 1 and 0.
    auto student = fake_trace(Matrix(3, 2, 0.0), rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}}), Matrix(3, 3, 0.0));
    const auto rt = recon_target(student, 2, {0, 2}, -1);
    const double a0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
    EXPECT_NEAR(rt.alpha.value()(0, 0), 0.7311, 1e-4);
    EXPECT_NEAR(rt.alpha.value()(1, 0), 0.2689, 1e-4);
    EXPECT_NEAR(rt.target.value()(0, 0), a0, 1e-15);
    EXPECT_NEAR(rt.target.value()(0, 1), 1.0 - a0, 1e-15);
    EXPECT_THROW(recon_target(student, 2, {1, 1}, -1), PartitionError);
}

TEST(LossRecon, SpreadTermAndSingletons) {
    // Body of 2 tokens and one Nexus slot whose state is orthogonal to both body states' difference.
    auto student = fake_trace(Matrix(3, 2, 0.0), rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}), Matrix(3, 3, 0.0));
    AugmentedSequence seq;
    seq.bodies.push_back({0, 2});
    seq.nexus.push_back({2, 3});
    // alpha is uniform, so the spread term vanishes and the target is (0.5, 0.5), parallel to the Nexus state.
    EXPECT_NEAR(loss_recon(student, seq, 0.1, -1).value.scalar(), 0.0, 1e-12);
    // Entropy term alone: beta * (1 - H(alpha)/log 2) for the hand case above.
    auto hand = fake_trace(Matrix(3, 2, 0.0), rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}}), Matrix(3, 3, 0.0));
    const double a0 = std::exp(1.0) / (std::exp(1.0) + 1.0);
    const double h = -(a0 * std::log(a0) + (1 - a0) * std::log(1 - a0));
    const double cos = a0 / std::sqrt(a0 * a0 + (1 - a0) * (1 - a0));
    const double beta = 0.5;
    EXPECT_NEAR(loss_recon(hand, seq, beta, -1).value.scalar(), (1 - cos) + beta * (1 - h / std::log(2.0)), 1e-12);
    // A singleton interval has no spread term and a perfect reconstruction.
    AugmentedSequence single;
    single.bodies.push_back({0, 1});
    single.nexus.push_back({2, 3});
    EXPECT_NEAR(loss_recon(hand, single, beta, -1).value.scalar(), 0.0, 1e-15);
    AugmentedSequence none;
    EXPECT_TRUE(loss_recon(hand, none, beta, -1).missing);
}

TEST(LossTotal, WeightedSum) {
    ComponentValues c{1.0, 2.0, 3.0, 4.0, 5.0};
    const LossReport r = loss_total(c, LossWeights{});
    EXPECT_DOUBLE_EQ(r.total, 10.5);
    LossWeights w;
    w.kd = w.hidden = w.akd = w.reg = w.recon = 0.0;
    EXPECT_EQ(loss_total(c, w).total, 0.0);
}

TEST(LossWeights, ValidationAndJson) {
    LossWeights w;
    w.gamma = 1.5;
    EXPECT_THROW(w.validate(), ConfigError);
    w = LossWeights{};
    w.tau = 0.0;
    EXPECT_THROW(w.validate(), ConfigError);
    w = LossWeights{};
    w.kd = -1.0;
    EXPECT_THROW(w.validate(), ConfigError);
    w = LossWeights{};
    w.beta = 0.25;
    EXPECT_EQ(loss_weights_from_json(to_json(w)), w);
}

TEST(ComputeLosses, ZeroHistoryHasNoNexusTerms) {
    const auto v = fixtures::letter_vocab();
    const auto nexus = fixtures::small_nexus();
    const auto params = init_model(fixtures::small_model(), nexus, v);
    ChatTranscript t;
    t.system = "a b";
    t.query = "c d";
    const auto conv = segment(t, v);
    const auto tseq = plain_sequence(conv);
    const auto sseq = insert_nexus(conv, 2, nexus);
    const auto teacher = teacher_forward(params, conv);
    ForwardOptions opts;
    opts.record = true;
    auto student = forward(params, sseq, build_mask(sseq), opts);
    const auto losses = compute_losses(teacher, tseq, student, sseq, LossWeights{});
    EXPECT_TRUE(losses.nexus_missing);
    const auto values = losses.values();
    EXPECT_EQ(values.kd, 0.0);
    EXPECT_EQ(values.akd, 0.0);
    EXPECT_EQ(values.hidden, 0.0);
    EXPECT_EQ(values.recon, 0.0);
    EXPECT_NEAR(values.reg, 0.1, 1e-15);
}
