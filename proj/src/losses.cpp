// SPDX-License-Identifier: Apache-2.0

#include "sonic/losses.hpp"

#include <cmath>
#include <unordered_map>

#include "sonic/errors.hpp"

namespace sonic {

void LossWeights::validate() const {
    for (double v : {kd, hidden, akd, reg, recon, tau, gamma, beta}) {
        if (!std::isfinite(v)) throw ConfigError("loss weights must be finite");
    }
    if (kd < 0 || hidden < 0 || akd < 0 || reg < 0 || recon < 0) {
        throw ConfigError("loss weights must be nonnegative");
    }
    if (!(tau > 0.0)) throw ConfigError("loss.tau must be > 0");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("loss.gamma must lie in [0, 1]");
    if (beta < 0.0) throw ConfigError("loss.beta must be >= 0");
    if (layer < -1) throw ConfigError("loss.layer must be -1 (final) or a block index");
}

nlohmann::json to_json(const LossWeights& w) {
    return {{"lambda_kd", w.kd}, {"lambda_hidden", w.hidden}, {"lambda_akd", w.akd}, {"lambda_reg", w.reg},
            {"lambda_recon", w.recon}, {"tau", w.tau}, {"gamma", w.gamma}, {"beta", w.beta}, {"layer", w.layer}};
}

LossWeights loss_weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    try {
        w.kd = j.value("lambda_kd", w.kd);
        w.hidden = j.value("lambda_hidden", w.hidden);
        w.akd = j.value("lambda_akd", w.akd);
        w.reg = j.value("lambda_reg", w.reg);
        w.recon = j.value("lambda_recon", w.recon);
        w.tau = j.value("tau", w.tau);
        w.gamma = j.value("gamma", w.gamma);
        w.beta = j.value("beta", w.beta);
        w.layer = j.value("layer", w.layer);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("loss: ") + e.what());
    }
    w.validate();
    return w;
}

nlohmann::json to_json(const LossReport& r) {
    auto comp = [](const ComponentValues& c) {
        return nlohmann::json{{"kd", c.kd}, {"hidden", c.hidden}, {"akd", c.akd}, {"reg", c.reg}, {"recon", c.recon}};
    };
    nlohmann::json j = comp(r.components);
    j["total"] = r.total;
    j["grad_norms"] = r.grad_norms ? comp(*r.grad_norms) : nlohmann::json(nullptr);
    return j;
}

AlignmentMap align(const AugmentedSequence& teacher, const AugmentedSequence& student) {
    if (teacher.sys.size() != student.sys.size() || teacher.query.size() != student.query.size()) {
        throw AlignmentError("teacher and student disagree on system/query lengths");
    }
    AlignmentMap map;
    auto pair_span = [&](Span t, Span s) {
        for (std::size_t k = 0; k < t.size(); ++k) {
            const std::size_t tp = t.begin + k;
            const std::size_t sp = s.begin + k;
            if (teacher.tokens[tp] != student.tokens[sp]) {
                throw AlignmentError("token mismatch at teacher position " + std::to_string(tp) +
                                     " / student position " + std::to_string(sp));
            }
            map.pairs.push_back({tp, sp, 1.0});
        }
    };
    pair_span(teacher.sys, student.sys);
    pair_span(teacher.query, student.query);
    return map;
}

std::vector<std::size_t> teacher_rows(const AlignmentMap& map) {
    std::vector<std::size_t> rows;
    for (const auto& p : map.pairs) rows.push_back(p.teacher);
    return rows;
}

std::vector<std::size_t> student_rows(const AlignmentMap& map) {
    std::vector<std::size_t> rows;
    for (const auto& p : map.pairs) rows.push_back(p.student);
    return rows;
}

std::size_t resolve_layer(const ForwardTrace& trace, int layer) {
    const std::size_t last = trace.hidden.size() - 1;
    if (layer < 0) return last;
    if (static_cast<std::size_t>(layer) > last) {
        throw ConfigError("loss layer " + std::to_string(layer) + " exceeds model depth");
    }
    return static_cast<std::size_t>(layer);
}

namespace {

// Index into trace.logits for each requested sequence position.
std::vector<std::size_t> logit_indices(const ForwardTrace& trace, std::span<const std::size_t> positions) {
    std::unordered_map<std::size_t, std::size_t> where;
    for (std::size_t k = 0; k < trace.logit_rows.size(); ++k) where.emplace(trace.logit_rows[k], k);
    std::vector<std::size_t> out;
    for (std::size_t p : positions) {
        auto it = where.find(p);
        if (it == where.end()) throw UsageError("position " + std::to_string(p) + " has no logits in the trace");
        out.push_back(it->second);
    }
    return out;
}

ag::Var zero_scalar(ag::Graph& g) { return g.constant(Matrix(1, 1, 0.0)); }

// Per-position KL(p_T || p_S) at temperature tau, as an |map| x 1 column.
ag::Var aligned_kl(const ForwardTrace& teacher, ForwardTrace& student, const AlignmentMap& map, double tau) {
    const auto t_rows = teacher_rows(map);
    const auto s_rows = student_rows(map);
    const auto t_idx = logit_indices(teacher, t_rows);
    const auto s_idx = logit_indices(student, s_rows);
    const Matrix& tl = teacher.logits.value();
    Matrix picked(t_idx.size(), tl.cols);
    for (std::size_t k = 0; k < t_idx.size(); ++k) {
        const auto src = tl.row(t_idx[k]);
        std::copy(src.begin(), src.end(), picked.row(k).begin());
    }
    return ag::kl_rows(ag::gather_rows(student.logits, s_idx), picked, tau);
}

void require_nonzero_rows(const Matrix& h, std::span<const std::size_t> rows, const char* what) {
    for (std::size_t r : rows) {
        double s = 0.0;
        for (double v : h.row(r)) s += v * v;
        if (s == 0.0) {
            throw NumericalError(std::string(what) + ": zero-norm hidden state at position " + std::to_string(r));
        }
    }
}

}  // namespace

ag::Var loss_kd(const ForwardTrace& teacher, ForwardTrace& student, const AlignmentMap& map, double tau) {
    ag::Graph& g = *student.graph;
    if (map.pairs.empty()) return zero_scalar(g);
    return ag::scale(ag::sum(aligned_kl(teacher, student, map, tau)), tau * tau);
}

ag::Var loss_akd(const ForwardTrace& teacher, ForwardTrace& student, const AlignmentMap& map, double tau) {
    ag::Graph& g = *student.graph;
    if (map.pairs.empty()) return zero_scalar(g);
    std::vector<double> w;
    for (const auto& p : map.pairs) w.push_back(p.weight);
    return ag::scale(ag::weighted_sum(aligned_kl(teacher, student, map, tau), w), tau * tau);
}

ag::Var loss_hidden(const ForwardTrace& teacher, ForwardTrace& student, const AlignmentMap& map, int layer) {
    ag::Graph& g = *student.graph;
    if (map.pairs.empty()) return zero_scalar(g);
    const Matrix& ht = teacher.hidden_at(resolve_layer(teacher, layer));
    const std::size_t sl = resolve_layer(student, layer);
    const auto t_rows = teacher_rows(map);
    const auto s_rows = student_rows(map);
    require_nonzero_rows(ht, t_rows, "loss_hidden (teacher)");
    require_nonzero_rows(student.hidden_at(sl), s_rows, "loss_hidden (student)");
    Matrix target(t_rows.size(), ht.cols);
    for (std::size_t k = 0; k < t_rows.size(); ++k) {
        const auto src = ht.row(t_rows[k]);
        std::copy(src.begin(), src.end(), target.row(k).begin());
    }
    ag::Var cos = ag::cosine_rows(ag::gather_rows(student.hidden[sl], s_rows), g.constant(std::move(target)));
    return ag::scale(ag::sum(ag::affine(cos, -1.0, 1.0)), 1.0 / static_cast<double>(map.size()));
}

AlignmentMap importance_weights(const ForwardTrace& teacher, const AugmentedSequence& teacher_seq,
                                AlignmentMap map) {
    if (map.pairs.empty()) return map;
    const Matrix attn = teacher.mean_attention();
    std::vector<std::size_t> history;
    for (const auto& b : teacher_seq.bodies) {
        for (std::size_t q = b.begin; q < b.end; ++q) history.push_back(q);
    }
    std::vector<double> raw;
    double total = 0.0;
    for (const auto& p : map.pairs) {
        double mass = 0.0;
        for (std::size_t q : history) mass += attn(p.teacher, q);
        raw.push_back(mass);
        total += mass;
    }
    const double n = static_cast<double>(map.size());
    for (std::size_t k = 0; k < map.size(); ++k) {
        map.pairs[k].weight = total > 0.0 ? raw[k] * n / total : 1.0;
    }
    return map;
}

NexusAttention nexus_attention(ForwardTrace& student, const AugmentedSequence& seq) {
    ag::Graph& g = *student.graph;
    std::vector<std::size_t> query_rows, nexus_cols;
    for (std::size_t p = seq.query.begin; p < seq.query.end; ++p) query_rows.push_back(p);
    for (const auto& run : seq.nexus) {
        for (std::size_t p = run.begin; p < run.end; ++p) nexus_cols.push_back(p);
    }
    if (query_rows.empty() || nexus_cols.empty()) return {zero_scalar(g), true};
    std::vector<ag::Var> parts;
    for (const auto& layer : student.attention) {
        for (const auto& head : layer) parts.push_back(ag::block_sum(head, query_rows, nexus_cols));
    }
    const double w = 1.0 / static_cast<double>(parts.size() * query_rows.size());
    std::vector<double> weights(parts.size(), w);
    return {ag::lincomb(parts, weights), false};
}

ag::Var loss_reg(ag::Var a_nexus, double gamma) { return ag::hinge_below(a_nexus, gamma); }

std::vector<Span> partition_body(Span body, int k) {
    if (k < 1 || body.size() < static_cast<std::size_t>(k)) {
        throw PartitionError("cannot split a body of " + std::to_string(body.size()) + " tokens into " +
                             std::to_string(k) + " nonempty intervals");
    }
    const std::size_t kk = static_cast<std::size_t>(k);
    const std::size_t base = body.size() / kk;
    const std::size_t extra = body.size() % kk;
    std::vector<Span> out;
    std::size_t at = body.begin;
    for (std::size_t j = 0; j < kk; ++j) {
        const std::size_t len = base + (j < extra ? 1 : 0);
        out.push_back({at, at + len});
        at += len;
    }
    return out;
}

ReconTarget recon_target(ForwardTrace& student, std::size_t nexus_position, Span interval, int layer) {
    if (interval.empty()) throw PartitionError("reconstruction interval is empty");
    const std::size_t l = resolve_layer(student, layer);
    ag::Var h = student.hidden[l];
    std::vector<std::size_t> rows;
    for (std::size_t p = interval.begin; p < interval.end; ++p) rows.push_back(p);
    require_nonzero_rows(h.value(), rows, "recon_target");
    const std::size_t np[] = {nexus_position};
    require_nonzero_rows(h.value(), np, "recon_target");
    std::vector<std::size_t> repeated(rows.size(), nexus_position);
    ag::Var hx = ag::gather_rows(h, rows);
    ag::Var alpha = ag::softmax_column(ag::cosine_rows(ag::gather_rows(h, repeated), hx));
    return {ag::matmul(ag::transpose(alpha), hx), alpha};
}

ReconLoss loss_recon(ForwardTrace& student, const AugmentedSequence& seq, double beta, int layer) {
    ag::Graph& g = *student.graph;
    const std::size_t l = resolve_layer(student, layer);
    std::vector<ag::Var> terms;
    for (std::size_t i = 0; i < seq.nexus.size(); ++i) {
        const Span run = seq.nexus[i];
        if (run.empty()) continue;
        const auto intervals = partition_body(seq.bodies[i], static_cast<int>(run.size()));
        for (std::size_t j = 0; j < intervals.size(); ++j) {
            const std::size_t pos = run.begin + j;
            auto rt = recon_target(student, pos, intervals[j], layer);
            const std::size_t np[] = {pos};
            ag::Var cos = ag::cosine_rows(ag::gather_rows(student.hidden[l], np), rt.target);
            ag::Var term = ag::affine(cos, -1.0, 1.0);
            const std::size_t m = intervals[j].size();
            if (m > 1) {
                // beta * (1 - H(alpha) / log m); a singleton interval contributes nothing.
                const double logm = std::log(static_cast<double>(m));
                ag::Var spread = ag::affine(ag::entropy(rt.alpha), -beta / logm, beta);
                term = ag::add(term, spread);
            }
            terms.push_back(term);
        }
    }
    if (terms.empty()) return {zero_scalar(g), true};
    std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
    return {ag::lincomb(terms, w), false};
}

LossReport loss_total(const ComponentValues& c, const LossWeights& w) {
    LossReport r;
    r.components = c;
    r.total = w.kd * c.kd + w.hidden * c.hidden + w.akd * c.akd + w.reg * c.reg + w.recon * c.recon;
    return r;
}

ComponentValues StepLosses::values() const {
    return {kd.scalar(), hidden.scalar(), akd.scalar(), reg.scalar(), recon.scalar()};
}

StepLosses compute_losses(const ForwardTrace& teacher, const AugmentedSequence& teacher_seq, ForwardTrace& student,
                          const AugmentedSequence& student_seq, const LossWeights& weights) {
    StepLosses out;
    out.map = importance_weights(teacher, teacher_seq, align(teacher_seq, student_seq));
    out.kd = loss_kd(teacher, student, out.map, weights.tau);
    out.hidden = loss_hidden(teacher, student, out.map, weights.layer);
    out.akd = loss_akd(teacher, student, out.map, weights.tau);
    auto a = nexus_attention(student, student_seq);
    out.reg = loss_reg(a.value, weights.gamma);
    auto recon = loss_recon(student, student_seq, weights.beta, weights.layer);
    out.recon = recon.value;
    out.nexus_missing = a.missing || recon.missing;
    const ag::Var parts[] = {out.kd, out.hidden, out.akd, out.reg, out.recon};
    const double w[] = {weights.kd, weights.hidden, weights.akd, weights.reg, weights.recon};
    out.total = ag::lincomb(parts, w);
    return out;
}

}  // namespace sonic
