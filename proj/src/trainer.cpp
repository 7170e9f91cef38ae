// SPDX-License-Identifier: Apache-2.0

#include "sonic/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <stdexcept>
#include <thread>

#include "sonic/errors.hpp"

namespace sonic {

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train: steps must be >= 1");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0, 1)");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
    nexus.validate();
    weights.validate();
    for (int k : budget_set) {
        if (!nexus.allows(k)) throw ConfigError("train: budget " + std::to_string(k) + " is not in the nexus k_set");
    }
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"seed", c.seed},
            {"steps", c.steps},
            {"batch", c.batch},
            {"learning_rate", c.learning_rate},
            {"optimizer", c.optimizer == Optimizer::Sgd ? "sgd" : "momentum"},
            {"momentum", c.momentum},
            {"nexus", to_json(c.nexus)},
            {"loss", to_json(c.weights)},
            {"data", c.data},
            {"checkpoint_every", c.checkpoint_every},
            {"budget_set", c.budget_set},
            {"grad_norms", c.grad_norms}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("train: expected an object");
    TrainConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.steps = j.value("steps", c.steps);
        c.batch = j.value("batch", c.batch);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        const std::string opt = j.value("optimizer", std::string("sgd"));
        if (opt == "sgd") {
            c.optimizer = Optimizer::Sgd;
        } else if (opt == "momentum") {
            c.optimizer = Optimizer::Momentum;
        } else {
            throw ConfigError("train: unknown optimizer '" + opt + "'");
        }
        c.momentum = j.value("momentum", c.momentum);
        if (j.contains("nexus")) c.nexus = nexus_config_from_json(j["nexus"]);
        if (j.contains("loss")) c.weights = loss_weights_from_json(j["loss"]);
        c.data = j.value("data", c.data);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.budget_set = j.value("budget_set", c.budget_set);
        c.grad_norms = j.value("grad_norms", c.grad_norms);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    c.validate();
    return c;
}

TrainState init_train_state(ModelParams params, const TrainConfig& config) {
    TrainState s;
    s.params = std::move(params);
    s.rng.seed(config.seed);
    return s;
}

int sample_budget(std::mt19937_64& rng, std::span<const int> budgets) {
    if (budgets.empty()) throw ConfigError("sample_budget: empty budget set");
    std::uniform_int_distribution<std::size_t> pick(0, budgets.size() - 1);
    return budgets[pick(rng)];
}

bool feasible_budget(std::size_t segments, int budget, std::size_t capacity) {
    return segments * static_cast<std::size_t>(budget) <= capacity;
}

std::vector<TrainItem> prepare_items(const ModelParams& params, std::span<const SegmentedConversation> data) {
    std::vector<TrainItem> items;
    items.reserve(data.size());
    for (const auto& conv : data) {
        TrainItem item;
        item.conversation = conv;
        item.teacher_sequence = plain_sequence(conv);
        item.teacher = std::make_shared<ForwardTrace>(teacher_forward(params, conv));
        items.push_back(std::move(item));
    }
    return items;
}

nlohmann::json to_json(const StepReport& r) {
    nlohmann::json j = to_json(r.loss);
    j["step"] = r.step;
    j["budget"] = r.budget;
    return j;
}

int worker_threads() {
    int n = 0;
    if (const char* env = std::getenv("SONIC_LAB_THREADS")) n = std::atoi(env);
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

StepLosses evaluate_losses(const ModelParams& params, const TrainItem& item, int budget, const LossWeights& weights,
                           ForwardTrace& student) {
    // Only the caller's config decides the budget, so insert with a permissive set.
    NexusConfig nexus;
    nexus.k_max = static_cast<int>(params.nexus.pos.rows);
    nexus.t_max = static_cast<int>(params.nexus.turn.rows);
    nexus.k_set = {budget};
    nexus.k_default = budget;
    const auto seq = insert_nexus(item.conversation, budget, nexus);
    const auto map = align(item.teacher_sequence, seq);
    ForwardOptions opts;
    opts.record = true;
    opts.logit_rows = student_rows(map);
    student = forward(params, seq, build_mask(seq, MaskMode::Training), opts);
    return compute_losses(*item.teacher, item.teacher_sequence, student, seq, weights);
}

namespace {

double grad_norm(const GradientSet& g) {
    double s = 0.0;
    for (const auto& [name, m] : g) {
        for (double v : m.data) s += v * v;
    }
    return std::sqrt(s);
}

struct ItemResult {
    GradientSet grads;
    ComponentValues values;
    double total = 0.0;
    ComponentValues norms;
    bool missing = false;
    std::exception_ptr error;
};

ItemResult run_item(const ModelParams& params, const TrainItem& item, int budget, const TrainConfig& config) {
    ItemResult r;
    ForwardTrace student;
    auto losses = evaluate_losses(params, item, budget, config.weights, student);
    r.values = losses.values();
    r.total = losses.total.scalar();
    r.missing = losses.nexus_missing;
    if (config.grad_norms) {
        r.norms.kd = grad_norm(gradients(student, losses.kd));
        r.norms.hidden = grad_norm(gradients(student, losses.hidden));
        r.norms.akd = grad_norm(gradients(student, losses.akd));
        r.norms.reg = grad_norm(gradients(student, losses.reg));
        r.norms.recon = grad_norm(gradients(student, losses.recon));
    }
    r.grads = gradients(student, losses.total);
    return r;
}

void accumulate(ComponentValues& acc, const ComponentValues& v, double s) {
    acc.kd += s * v.kd;
    acc.hidden += s * v.hidden;
    acc.akd += s * v.akd;
    acc.reg += s * v.reg;
    acc.recon += s * v.recon;
}

}  // namespace

StepReport train_step(TrainState& state, std::span<const TrainItem* const> batch, const TrainConfig& config) {
    if (batch.empty()) throw UsageError("train_step: empty batch");
    const int budget = sample_budget(state.rng, config.budgets());
    const std::uint64_t frozen_before = state.params.frozen_checksum();

    std::vector<ItemResult> results(batch.size());
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), batch.size());
    auto work = [&](std::size_t w) {
        for (std::size_t i = w; i < batch.size(); i += workers) {
            try {
                results[i] = run_item(state.params, *batch[i], budget, config);
            } catch (...) {
                results[i].error = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
        for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!results[i].error) continue;
        try {
            std::rethrow_exception(results[i].error);
        } catch (const Error& e) {
            const std::string where = "step " + std::to_string(state.step) + ", batch item " + std::to_string(i) + ": ";
            if (e.kind() == "numerical_error") throw NumericalError(where + e.what());
            throw;
        }
    }

    // Fixed-order reduction keeps the update independent of thread scheduling.
    const double inv = 1.0 / static_cast<double>(batch.size());
    StepReport report;
    report.step = state.step;
    report.budget = budget;
    GradientSet mean;
    ComponentValues norms;
    for (const auto& r : results) {
        accumulate(report.loss.components, r.values, inv);
        accumulate(norms, r.norms, inv);
        report.loss.total += inv * r.total;
        report.loss.nexus_missing = report.loss.nexus_missing || r.missing;
        for (const auto& [name, g] : r.grads) {
            auto [it, fresh] = mean.try_emplace(name, g.rows, g.cols, 0.0);
            for (std::size_t k = 0; k < g.data.size(); ++k) it->second.data[k] += inv * g.data[k];
        }
    }
    if (config.grad_norms) report.loss.grad_norms = norms;

    for (auto& t : state.params.tensors()) {
        if (!t.trainable) continue;
        auto it = mean.find(t.name);
        if (it == mean.end()) continue;
        const Matrix& g = it->second;
        Matrix& w = *t.tensor;
        if (config.optimizer == Optimizer::Momentum) {
            auto [m, fresh] = state.moments.try_emplace(t.name, g.rows, g.cols, 0.0);
            for (std::size_t k = 0; k < g.data.size(); ++k) {
                m->second.data[k] = config.momentum * m->second.data[k] + g.data[k];
                w.data[k] -= config.learning_rate * m->second.data[k];
            }
        } else {
            for (std::size_t k = 0; k < g.data.size(); ++k) w.data[k] -= config.learning_rate * g.data[k];
        }
    }
    if (state.params.frozen_checksum() != frozen_before) {
        throw std::logic_error("train_step: a frozen tensor was modified");
    }

    state.running_total = state.step == 0 ? report.loss.total : 0.9 * state.running_total + 0.1 * report.loss.total;
    ++state.step;
    return report;
}

TrainRun train(ModelParams params, std::span<const TrainItem> items, const TrainConfig& config,
               const StepCallback& on_step) {
    config.validate();
    if (items.empty()) throw UsageError("train: no training conversations");
    TrainRun run;
    run.state = init_train_state(std::move(params), config);
    std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
    std::vector<const TrainItem*> batch(static_cast<std::size_t>(config.batch));
    for (int s = 0; s < config.steps; ++s) {
        for (auto& b : batch) b = &items[pick(run.state.rng)];
        run.log.push_back(train_step(run.state, batch, config));
        if (on_step) on_step(run.log.back(), run.state);
    }
    return run;
}

}  // namespace sonic
