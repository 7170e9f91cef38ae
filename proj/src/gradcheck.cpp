// SPDX-License-Identifier: Apache-2.0

#include "sonic/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sonic {

GradcheckConfig::GradcheckConfig() {
    nexus.k_max = 4;
    nexus.k_default = 2;
    nexus.k_set = {1, 2, 3, 4};
    nexus.t_max = 4;
    // A high threshold keeps the attention hinge active, so its gradient is exercised.
    weights.gamma = 0.9;
}

nlohmann::json to_json(const GradcheckReport& r) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : r.components) {
        comps.push_back({{"name", c.name},
                         {"coordinates", c.coordinates},
                         {"failures", c.failures},
                         {"max_rel_error", c.max_rel_error},
                         {"worst_tensor", c.worst_tensor},
                         {"worst_index", c.worst_index}});
    }
    return {{"passed", r.passed}, {"components", comps}};
}

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({floor, std::abs(analytic), std::abs(numeric)});
}

GradcheckFixture gradcheck_fixture(std::uint64_t seed) {
    std::vector<std::string> words;
    for (int i = 0; i < 24; ++i) words.push_back("w" + std::to_string(i));
    GradcheckFixture f;
    f.vocab = Vocabulary::build(words);
    std::mt19937_64 rng(seed);
    auto text = [&](int lo, int hi) {
        const int n = std::uniform_int_distribution<int>(lo, hi)(rng);
        std::string s;
        for (int i = 0; i < n; ++i) {
            if (i) s += ' ';
            s += words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
        }
        return s;
    };
    ChatTranscript t;
    t.system = text(2, 3);
    for (int k = 0; k < 2; ++k) t.turns.push_back({text(3, 5), text(2, 5)});
    t.query = text(2, 3);
    f.conversation = segment(t, f.vocab);
    return f;
}

namespace {

constexpr std::size_t kComponents = 6;
const char* const kNames[kComponents] = {"L_KD", "L_H", "L_AKD", "L_Reg", "L_recon", "L_total"};

std::array<double, kComponents> values_of(const StepLosses& l) {
    return {l.kd.scalar(), l.hidden.scalar(), l.akd.scalar(), l.reg.scalar(), l.recon.scalar(), l.total.scalar()};
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckConfig& config) {
    const auto fixture = gradcheck_fixture(config.seed);
    ModelConfig mc = config.model;
    mc.init_seed = config.seed;
    ModelParams params = init_model(mc, config.nexus, fixture.vocab);

    const auto& conv = fixture.conversation;
    const auto tseq = plain_sequence(conv);
    const auto sseq = insert_nexus(conv, config.budget, config.nexus);
    const auto smask = build_mask(sseq);
    const auto map = align(tseq, sseq);
    const auto teacher = teacher_forward(params, conv);

    auto run = [&](bool record, ForwardTrace& trace) {
        ForwardOptions opts;
        opts.record = record;
        opts.logit_rows = student_rows(map);
        trace = forward(params, sseq, smask, opts);
        return compute_losses(teacher, tseq, trace, sseq, config.weights);
    };

    std::array<GradientSet, kComponents> analytic;
    {
        ForwardTrace trace;
        auto losses = run(true, trace);
        const ag::Var parts[kComponents] = {losses.kd, losses.hidden, losses.akd, losses.reg, losses.recon, losses.total};
        for (std::size_t c = 0; c < kComponents; ++c) analytic[c] = gradients(trace, parts[c]);
    }

    GradcheckReport report;
    for (std::size_t c = 0; c < kComponents; ++c) report.components.push_back(ComponentCheck{kNames[c], 0, 0, 0.0, "", 0});
    for (auto& t : params.tensors()) {
        if (!t.trainable) continue;
        Matrix& w = *t.tensor;
        for (std::size_t k = 0; k < w.data.size(); ++k) {
            const double orig = w.data[k];
            ForwardTrace trace;
            w.data[k] = orig + config.step;
            const auto plus = values_of(run(false, trace));
            w.data[k] = orig - config.step;
            const auto minus = values_of(run(false, trace));
            w.data[k] = orig;
            for (std::size_t c = 0; c < kComponents; ++c) {
                const double numeric = (plus[c] - minus[c]) / (2.0 * config.step);
                const double a = analytic[c].at(t.name).data[k];
                const double err = relative_error(a, numeric, config.floor);
                auto& check = report.components[c];
                ++check.coordinates;
                if (err > config.tolerance) ++check.failures;
                if (err > check.max_rel_error) {
                    check.max_rel_error = err;
                    check.worst_tensor = t.name;
                    check.worst_index = k;
                }
            }
        }
    }
    for (const auto& c : report.components) report.passed = report.passed && c.failures == 0;
    return report;
}

}  // namespace sonic
