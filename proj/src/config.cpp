// SPDX-License-Identifier: Apache-2.0

#include "sonic/config.hpp"

#include <fstream>
#include <set>

#include "sonic/benchgen.hpp"
#include "sonic/errors.hpp"

namespace sonic {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& block) {
    if (!j.is_object()) throw ConfigError(block + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(block + ": unknown key '" + key + "'");
    }
}

}  // namespace

void GlobalConfig::validate() const {
    model.validate();
    nexus.validate();
    loss.validate();
    effective_train().validate();
    if (nexus.k_max > model.context) throw ConfigError("nexus.k_max exceeds model.context");
}

ModelConfig GlobalConfig::effective_model() const {
    ModelConfig m = model;
    m.init_seed = seed;
    return m;
}

TrainConfig GlobalConfig::effective_train() const {
    TrainConfig t = train;
    t.seed = seed;
    t.nexus = nexus;
    t.weights = loss;
    if (t.data.empty()) t.data = paths.data;
    return t;
}

nlohmann::json to_json(const GlobalConfig& c) {
    auto model = to_json(c.model);
    model.erase("init_seed");
    auto train = to_json(c.train);
    for (const char* k : {"seed", "nexus", "loss"}) train.erase(k);
    return {{"model", model},
            {"nexus", to_json(c.nexus)},
            {"loss", to_json(c.loss)},
            {"train", train},
            {"paths",
             {{"data", c.paths.data}, {"out", c.paths.out}, {"vocab", c.paths.vocab}, {"checkpoint", c.paths.checkpoint}}},
            {"seed", c.seed}};
}

GlobalConfig global_config_from_json(const nlohmann::json& j) {
    reject_unknown(j, {"model", "nexus", "loss", "train", "paths", "seed"}, "config");
    GlobalConfig c;
    if (j.contains("model")) {
        reject_unknown(j["model"], {"layers", "dim", "heads", "mlp_hidden", "context", "norm_eps"}, "model");
        c.model = model_config_from_json(j["model"]);
    }
    if (j.contains("nexus")) {
        reject_unknown(j["nexus"], {"k_max", "k_default", "k_set", "base_init", "t_max", "keywords", "base_seed"},
                       "nexus");
        c.nexus = nexus_config_from_json(j["nexus"]);
    }
    if (j.contains("loss")) {
        reject_unknown(j["loss"],
                       {"lambda_kd", "lambda_hidden", "lambda_akd", "lambda_reg", "lambda_recon", "tau", "gamma", "beta",
                        "layer"},
                       "loss");
        c.loss = loss_weights_from_json(j["loss"]);
    }
    if (j.contains("train")) {
        reject_unknown(j["train"],
                       {"steps", "batch", "learning_rate", "optimizer", "momentum", "data", "checkpoint_every",
                        "budget_set", "grad_norms"},
                       "train");
        auto block = j["train"];
        // Budget overrides are checked against the top-level nexus block below.
        block["nexus"] = to_json(c.nexus);
        c.train = train_config_from_json(block);
        c.train.nexus = NexusConfig{};
    }
    if (j.contains("paths")) {
        reject_unknown(j["paths"], {"data", "out", "vocab", "checkpoint"}, "paths");
        try {
            const auto& p = j["paths"];
            c.paths.data = p.value("data", c.paths.data);
            c.paths.out = p.value("out", c.paths.out);
            c.paths.vocab = p.value("vocab", c.paths.vocab);
            c.paths.checkpoint = p.value("checkpoint", c.paths.checkpoint);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("paths: ") + e.what());
        }
    }
    try {
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("seed: ") + e.what());
    }
    c.validate();
    return c;
}

GlobalConfig load_global_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return global_config_from_json(j);
}

Vocabulary load_vocabulary(const PathsConfig& paths) {
    if (paths.vocab.empty()) return benchmark_vocabulary();
    return Vocabulary::load(paths.vocab);
}

}  // namespace sonic
