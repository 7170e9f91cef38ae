// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "json.hpp"
#include "sonic/net.hpp"

namespace sonic {

struct AlignedPair {
    std::size_t teacher = 0;
    std::size_t student = 0;
    double weight = 1.0;
    bool operator==(const AlignedPair&) const = default;
};

// Positions shared one-to-one by teacher and student: the system prompt and the current query.
struct AlignmentMap {
    std::vector<AlignedPair> pairs;
    std::size_t size() const { return pairs.size(); }
};

struct LossWeights {
    double kd = 1.0;
    double hidden = 0.5;
    double akd = 0.5;
    double reg = 0.5;
    double recon = 1.0;
    double tau = 3.0;
    double gamma = 0.1;
    double beta = 0.1;
    // Residual-stream layer used for hidden alignment and reconstruction; -1 is the final block.
    int layer = -1;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

struct ComponentValues {
    double kd = 0.0;
    double hidden = 0.0;
    double akd = 0.0;
    double reg = 0.0;
    double recon = 0.0;
};

struct LossReport {
    ComponentValues components;
    double total = 0.0;
    // Filled only when gradient-norm diagnostics are requested.
    std::optional<ComponentValues> grad_norms;
    bool nexus_missing = false;
};

nlohmann::json to_json(const LossReport& r);

AlignmentMap align(const AugmentedSequence& teacher, const AugmentedSequence& student);

// Resolves -1 to the final block.
std::size_t resolve_layer(const ForwardTrace& trace, int layer);

ag::Var loss_kd(const ForwardTrace& teacher, ForwardTrace& student, const AlignmentMap& map, double tau);
ag::Var loss_hidden(const ForwardTrace& teacher, ForwardTrace& student, const AlignmentMap& map, int layer);

// w(x) for x in the alignment set: the head- and layer-averaged teacher attention
// mass x places on historical body tokens, normalized to mean 1 (uniform when all zero).
AlignmentMap importance_weights(const ForwardTrace& teacher, const AugmentedSequence& teacher_seq,
                                AlignmentMap map);
ag::Var loss_akd(const ForwardTrace& teacher, ForwardTrace& student, const AlignmentMap& map, double tau);

struct NexusAttention {
    ag::Var value;
    // Set when the sequence has no Nexus or no query positions; value is then 0.
    bool missing = false;
};

NexusAttention nexus_attention(ForwardTrace& student, const AugmentedSequence& seq);
ag::Var loss_reg(ag::Var a_nexus, double gamma);

// Contiguous sub-intervals, sizes differing by at most one, larger ones first.
std::vector<Span> partition_body(Span body, int k);

struct ReconTarget {
    ag::Var target;  // 1 x dim
    ag::Var alpha;   // |interval| x 1
};

ReconTarget recon_target(ForwardTrace& student, std::size_t nexus_position, Span interval, int layer);

struct ReconLoss {
    ag::Var value;
    bool missing = false;
};

ReconLoss loss_recon(ForwardTrace& student, const AugmentedSequence& seq, double beta, int layer);

LossReport loss_total(const ComponentValues& components, const LossWeights& weights);

// All five objectives for one teacher/student pair plus their weighted total,
// as nodes of the student graph.
struct StepLosses {
    ag::Var kd, hidden, akd, reg, recon, total;
    AlignmentMap map;
    bool nexus_missing = false;

    ComponentValues values() const;
};

StepLosses compute_losses(const ForwardTrace& teacher, const AugmentedSequence& teacher_seq, ForwardTrace& student,
                          const AugmentedSequence& student_seq, const LossWeights& weights);

// Logit rows both forwards must produce for compute_losses.
std::vector<std::size_t> teacher_rows(const AlignmentMap& map);
std::vector<std::size_t> student_rows(const AlignmentMap& map);

}  // namespace sonic
