// SPDX-License-Identifier: Apache-2.0

#include "sonic/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "sonic/errors.hpp"

namespace sonic {

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("model.layers must be >= 1");
    if (dim < 1 || heads < 1 || dim % heads != 0) throw ConfigError("model.dim must be a positive multiple of model.heads");
    if (mlp_hidden < 1) throw ConfigError("model.mlp_hidden must be >= 1");
    if (context < 1) throw ConfigError("model.context must be >= 1");
    if (!(norm_eps > 0.0)) throw ConfigError("model.norm_eps must be > 0");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"layers", c.layers},         {"dim", c.dim},           {"heads", c.heads},
            {"mlp_hidden", c.mlp_hidden}, {"context", c.context},   {"init_seed", c.init_seed},
            {"norm_eps", c.norm_eps}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.layers = j.value("layers", c.layers);
        c.dim = j.value("dim", c.dim);
        c.heads = j.value("heads", c.heads);
        c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
        c.context = j.value("context", c.context);
        c.init_seed = j.value("init_seed", c.init_seed);
        c.norm_eps = j.value("norm_eps", c.norm_eps);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<NamedTensor> ModelParams::tensors() {
    std::vector<NamedTensor> out{
        {"token_embedding", &token_embedding, false},
        {"position_embedding", &position_embedding, false},
        {"nexus.base", &nexus.base, true},
        {"nexus.pos", &nexus.pos, true},
        {"nexus.turn", &nexus.turn, true},
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& L = layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        for (auto [name, m] : {std::pair{"norm1", &L.norm1}, {"norm2", &L.norm2}, {"wq", &L.wq},
                               {"wk", &L.wk}, {"wv", &L.wv}, {"wo", &L.wo}, {"w1", &L.w1},
                               {"b1", &L.b1}, {"w2", &L.w2}, {"b2", &L.b2}}) {
            out.push_back({p + name, m, false});
        }
        for (auto [name, m] : {std::pair{"wq", &L.nwq}, {"wk", &L.nwk}, {"wv", &L.nwv}, {"wo", &L.nwo},
                               {"w1", &L.nw1}, {"b1", &L.nb1}, {"w2", &L.nw2}, {"b2", &L.nb2}}) {
            out.push_back({p + "nexus." + name, m, true});
        }
    }
    out.push_back({"final_norm", &final_norm, false});
    out.push_back({"unembedding", &unembedding, false});
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& t : const_cast<ModelParams*>(this)->tensors()) out.emplace_back(t.name, t.tensor);
    return out;
}

std::uint64_t ModelParams::frozen_checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    for (auto& t : const_cast<ModelParams*>(this)->tensors()) {
        if (t.trainable) continue;
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.tensor->data.data());
        for (std::size_t i = 0; i < t.tensor->data.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

ModelParams allocate_model(const ModelConfig& config, const NexusConfig& nexus, std::size_t vocab_size) {
    config.validate();
    nexus.validate();
    const auto d = static_cast<std::size_t>(config.dim);
    const auto h = static_cast<std::size_t>(config.mlp_hidden);
    ModelParams p;
    p.config = config;
    p.vocab_size = vocab_size;
    p.token_embedding = Matrix(vocab_size, d);
    p.position_embedding = Matrix(static_cast<std::size_t>(config.context), d);
    for (int l = 0; l < config.layers; ++l) {
        LayerParams L;
        L.norm1 = Matrix(1, d, 1.0);
        L.norm2 = Matrix(1, d, 1.0);
        for (Matrix* m : {&L.wq, &L.wk, &L.wv, &L.wo, &L.nwq, &L.nwk, &L.nwv, &L.nwo}) *m = Matrix(d, d);
        L.w1 = L.nw1 = Matrix(d, h);
        L.b1 = L.nb1 = Matrix(1, h);
        L.w2 = L.nw2 = Matrix(h, d);
        L.b2 = L.nb2 = Matrix(1, d);
        p.layers.push_back(std::move(L));
    }
    p.final_norm = Matrix(1, d, 1.0);
    p.unembedding = Matrix(d, vocab_size);
    p.nexus.base = Matrix(1, d);
    p.nexus.pos = Matrix(static_cast<std::size_t>(nexus.k_max), d);
    p.nexus.turn = Matrix(static_cast<std::size_t>(nexus.t_max), d);
    return p;
}

ModelParams init_model(const ModelConfig& config, const NexusConfig& nexus, const Vocabulary& vocab) {
    ModelParams p = allocate_model(config, nexus, vocab.size());
    std::mt19937_64 rng(config.init_seed);
    const auto d = static_cast<std::size_t>(config.dim);
    const auto h = static_cast<std::size_t>(config.mlp_hidden);
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));

    p.token_embedding = Matrix::randn(vocab.size(), d, 1.0, rng);
    p.position_embedding = Matrix::randn(static_cast<std::size_t>(config.context), d, 0.3, rng);
    for (auto& L : p.layers) {
        L.wq = Matrix::randn(d, d, sd, rng);
        L.wk = Matrix::randn(d, d, sd, rng);
        L.wv = Matrix::randn(d, d, sd, rng);
        L.wo = Matrix::randn(d, d, 0.5 * sd, rng);
        L.w1 = Matrix::randn(d, h, sd, rng);
        L.w2 = Matrix::randn(h, d, 0.5 / std::sqrt(static_cast<double>(h)), rng);
        L.nwq = L.wq;
        L.nwk = L.wk;
        L.nwv = L.wv;
        L.nwo = L.wo;
        L.nw1 = L.w1;
        L.nb1 = L.b1;
        L.nw2 = L.w2;
        L.nb2 = L.b2;
    }
    p.unembedding = Matrix::randn(d, vocab.size(), sd, rng);

    const auto base = init_base_embedding(vocab, p.token_embedding, nexus, nexus.base_init);
    std::copy(base.begin(), base.end(), p.nexus.base.data.begin());
    p.nexus.pos = Matrix::randn(static_cast<std::size_t>(nexus.k_max), d, 0.3, rng);
    p.nexus.turn = Matrix::randn(static_cast<std::size_t>(nexus.t_max), d, 0.3, rng);
    return p;
}

Matrix ForwardTrace::mean_attention() const {
    Matrix out(length, length, 0.0);
    std::size_t count = 0;
    for (const auto& layer : attention) {
        for (const auto& head : layer) {
            const Matrix& a = head.value();
            for (std::size_t i = 0; i < a.size(); ++i) out.data[i] += a.data[i];
            ++count;
        }
    }
    for (auto& v : out.data) v /= static_cast<double>(count);
    return out;
}

Matrix ForwardTrace::distributions(double tau) const { return ag::softmax_rows(logits.value(), tau); }

namespace {

void check_finite(const Matrix& m, std::size_t layer) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) {
            if (!std::isfinite(m(r, c))) {
                throw NumericalError("non-finite hidden state at layer " + std::to_string(layer) +
                                     ", position " + std::to_string(r));
            }
        }
    }
}

}  // namespace

ForwardTrace forward(const ModelParams& params, const AugmentedSequence& seq, const VisibilityMask& mask,
                     const ForwardOptions& options) {
    const std::size_t n = seq.length();
    if (mask.length() != n) throw UsageError("mask length does not match sequence length");
    if (n == 0) throw UsageError("forward() on an empty sequence");
    if (n > static_cast<std::size_t>(params.config.context)) {
        throw UsageError("sequence length " + std::to_string(n) + " exceeds model context " +
                         std::to_string(params.config.context));
    }

    ForwardTrace trace;
    trace.graph = std::make_unique<ag::Graph>(options.record);
    trace.length = n;
    ag::Graph& g = *trace.graph;

    std::map<std::string, ag::Var> bound;
    for (const auto& [name, tensor] : params.tensors()) {
        const bool trainable = name.starts_with("nexus.") || name.find(".nexus.") != std::string::npos;
        ag::Var v = g.param(*tensor, trainable);
        bound.emplace(name, v);
        if (trainable && options.record) trace.trainable.emplace_back(name, v);
    }
    auto P = [&](const std::string& name) { return bound.at(name); };

    std::vector<std::size_t> text_rows, text_ids, nexus_rows, slot_rows, turn_rows;
    std::vector<unsigned char> alt(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& tag = seq.tags[i];
        if (tag.kind == TagKind::Nexus) {
            if (tag.slot < 1 || static_cast<std::size_t>(tag.slot) > params.nexus.pos.rows) {
                throw IndexError("nexus slot " + std::to_string(tag.slot) + " exceeds k_max");
            }
            if (tag.turn < 1 || static_cast<std::size_t>(tag.turn) > params.nexus.turn.rows) {
                throw IndexError("turn id " + std::to_string(tag.turn) + " exceeds t_max");
            }
            nexus_rows.push_back(i);
            slot_rows.push_back(static_cast<std::size_t>(tag.slot - 1));
            turn_rows.push_back(static_cast<std::size_t>(tag.turn - 1));
            alt[i] = 1;
        } else {
            const int tok = seq.tokens[i];
            if (tok < 0 || static_cast<std::size_t>(tok) >= params.vocab_size) {
                throw IndexError("token id " + std::to_string(tok) + " at position " + std::to_string(i) +
                                 " is outside the vocabulary");
            }
            text_rows.push_back(i);
            text_ids.push_back(static_cast<std::size_t>(tok));
        }
    }

    ag::Var x = ag::scatter_rows(ag::gather_rows(P("token_embedding"), text_ids), text_rows, n);
    if (!nexus_rows.empty()) {
        ag::Var composed = ag::add_row(
            ag::add(ag::gather_rows(P("nexus.pos"), slot_rows), ag::gather_rows(P("nexus.turn"), turn_rows)),
            P("nexus.base"));
        x = ag::add(x, ag::scatter_rows(composed, nexus_rows, n));
    }
    std::vector<std::size_t> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = i;
    x = ag::add(x, ag::gather_rows(P("position_embedding"), positions));
    check_finite(x.value(), 0);
    trace.hidden.push_back(x);

    std::vector<std::size_t> zeroed;
    for (int s : options.zero_nexus_segments) {
        if (s < 0 || static_cast<std::size_t>(s) >= seq.nexus.size()) continue;
        for (std::size_t p = seq.nexus[s].begin; p < seq.nexus[s].end; ++p) zeroed.push_back(p);
    }

    const auto heads = static_cast<std::size_t>(params.config.heads);
    const double eps = params.config.norm_eps;
    const ag::Var none{};
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const std::string pre = "layers." + std::to_string(l) + ".";
        auto W = [&](const char* name) { return P(pre + name); };
        auto N = [&](const char* name) { return P(pre + "nexus." + name); };

        ag::Var a = ag::rmsnorm(x, W("norm1"), eps);
        ag::Var q = ag::routed_linear(a, W("wq"), none, N("wq"), none, alt);
        ag::Var k = ag::routed_linear(a, W("wk"), none, N("wk"), none, alt);
        ag::Var v = ag::routed_linear(a, W("wv"), none, N("wv"), none, alt);
        std::vector<ag::Var> probs;
        for (std::size_t h = 0; h < heads; ++h) probs.push_back(ag::attention_probs(q, k, mask, h, heads));
        ag::Var o = ag::routed_linear(ag::attention_mix(probs, v), W("wo"), none, N("wo"), none, alt);
        if (!zeroed.empty()) o = ag::zero_rows(o, zeroed);
        x = ag::add(x, o);
        trace.attention.push_back(std::move(probs));

        ag::Var m = ag::rmsnorm(x, W("norm2"), eps);
        m = ag::gelu(ag::routed_linear(m, W("w1"), W("b1"), N("w1"), N("b1"), alt));
        m = ag::routed_linear(m, W("w2"), W("b2"), N("w2"), N("b2"), alt);
        if (!zeroed.empty()) m = ag::zero_rows(m, zeroed);
        x = ag::add(x, m);
        check_finite(x.value(), l + 1);
        trace.hidden.push_back(x);
    }

    if (options.logit_rows) {
        trace.logit_rows = *options.logit_rows;
    } else {
        trace.logit_rows = positions;
    }
    ag::Var last = ag::gather_rows(x, trace.logit_rows);
    trace.logits = ag::matmul(ag::rmsnorm(last, P("final_norm"), eps), P("unembedding"));
    return trace;
}

ForwardTrace teacher_forward(const ModelParams& params, const SegmentedConversation& conv,
                             const ForwardOptions& options) {
    const auto seq = plain_sequence(conv);
    return forward(params, seq, build_mask(seq), options);
}

GradientSet gradients(ForwardTrace& trace, ag::Var loss) {
    if (!trace.graph || !trace.graph->recording()) {
        throw UsageError("gradients(): forward was run without recording");
    }
    trace.graph->backward(loss);
    GradientSet out;
    for (const auto& [name, v] : trace.trainable) {
        const Matrix* gm = trace.graph->grad_if_any(v.id);
        const Matrix& value = v.value();
        out.emplace(name, gm ? *gm : Matrix(value.rows, value.cols, 0.0));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const NexusConfig& nexus,
                     std::uint64_t vocab_fingerprint) {
    nlohmann::json j;
    j["format"] = "sonic-lab-checkpoint";
    j["version"] = 1;
    j["model"] = to_json(params.config);
    j["nexus"] = to_json(nexus);
    j["vocab_size"] = params.vocab_size;
    j["vocab_fingerprint"] = vocab_fingerprint;
    j["tensors"] = nlohmann::json::array();
    for (const auto& [name, m] : params.tensors()) {
        j["tensors"].push_back({{"name", name}, {"shape", {m->rows, m->cols}}, {"data", m->data}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path.string() + ": " + e.what());
    }
    if (j.value("format", std::string()) != "sonic-lab-checkpoint" || j.value("version", 0) != 1) {
        throw ConfigError("checkpoint " + path.string() + ": unsupported format or version");
    }
    Checkpoint ck;
    ck.nexus = nexus_config_from_json(j.at("nexus"));
    const ModelConfig mc = model_config_from_json(j.at("model"));
    ck.vocab_fingerprint = j.at("vocab_fingerprint").get<std::uint64_t>();
    const auto vocab_size = j.at("vocab_size").get<std::size_t>();

    ck.params = allocate_model(mc, ck.nexus, vocab_size);

    std::map<std::string, const nlohmann::json*> stored;
    for (const auto& t : j.at("tensors")) stored.emplace(t.at("name").get<std::string>(), &t);
    for (auto& t : ck.params.tensors()) {
        auto it = stored.find(t.name);
        if (it == stored.end()) throw ConfigError("checkpoint is missing tensor " + t.name);
        const auto& tj = *it->second;
        const auto shape = tj.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2 || shape[0] != t.tensor->rows || shape[1] != t.tensor->cols) {
            throw ConfigError("checkpoint tensor " + t.name + " has a shape inconsistent with the config");
        }
        auto data = tj.at("data").get<std::vector<double>>();
        if (data.size() != t.tensor->size()) throw ConfigError("checkpoint tensor " + t.name + " has wrong size");
        t.tensor->data = std::move(data);
    }
    return ck;
}

}  // namespace sonic
