// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sonic/autograd.hpp"
#include "sonic/mask.hpp"
#include "sonic/nexus.hpp"

namespace sonic {

struct ModelConfig {
    int layers = 2;
    int dim = 32;
    int heads = 4;
    int mlp_hidden = 128;
    int context = 512;
    std::uint64_t init_seed = 0;
    double norm_eps = 1e-6;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct LayerParams {
    Matrix norm1, norm2;
    Matrix wq, wk, wv, wo;
    Matrix w1, b1, w2, b2;
    // Nexus branch, same shapes as the standard branch.
    Matrix nwq, nwk, nwv, nwo;
    Matrix nw1, nb1, nw2, nb2;
};

struct NamedTensor {
    std::string name;
    Matrix* tensor;
    bool trainable;
};

struct ModelParams {
    ModelConfig config;
    std::size_t vocab_size = 0;
    Matrix token_embedding;     // vocab x dim
    Matrix position_embedding;  // context x dim
    NexusEmbeddings nexus;
    std::vector<LayerParams> layers;
    Matrix final_norm;   // 1 x dim
    Matrix unembedding;  // dim x vocab

    // Fixed order; Nexus-related tensors are the only trainable ones.
    std::vector<NamedTensor> tensors();
    std::vector<std::pair<std::string, const Matrix*>> tensors() const;
    // FNV-1a over the bytes of every frozen tensor.
    std::uint64_t frozen_checksum() const;
};

// Zero-filled tensors with the shapes implied by the configuration.
ModelParams allocate_model(const ModelConfig& config, const NexusConfig& nexus, std::size_t vocab_size);

// Standard weights are seeded normal; the Nexus branch starts as a copy of them.
ModelParams init_model(const ModelConfig& config, const NexusConfig& nexus, const Vocabulary& vocab);

using GradientSet = std::map<std::string, Matrix>;

struct ForwardOptions {
    // Record the tape so `gradients` can run.
    bool record = false;
    // Rows whose logits are produced; all rows when unset.
    std::optional<std::vector<std::size_t>> logit_rows;
    // Segments (0-based) whose Nexus branch outputs are forced to zero, so their
    // Nexus hidden states stay equal to their input embeddings.
    std::vector<int> zero_nexus_segments;
};

struct ForwardTrace {
    std::unique_ptr<ag::Graph> graph;
    std::size_t length = 0;
    // hidden[0] is the embedding layer, hidden[l] the residual stream after block l.
    std::vector<ag::Var> hidden;
    // attention[layer][head], each L x L.
    std::vector<std::vector<ag::Var>> attention;
    std::vector<std::size_t> logit_rows;
    ag::Var logits;
    std::vector<std::pair<std::string, ag::Var>> trainable;

    const Matrix& hidden_at(std::size_t layer) const { return hidden.at(layer).value(); }
    const Matrix& attention_at(std::size_t layer, std::size_t head) const {
        return attention.at(layer).at(head).value();
    }
    // Head- and layer-averaged attention weights.
    Matrix mean_attention() const;
    // Softmax(logits / tau) for every logit row.
    Matrix distributions(double tau = 1.0) const;
};

// Nexus-tagged positions route through the Nexus projections and MLP; the
// rest through the standard branch. Masked pairs get exactly zero weight.
ForwardTrace forward(const ModelParams& params, const AugmentedSequence& seq, const VisibilityMask& mask,
                     const ForwardOptions& options = {});

// Full uncompressed context under plain causal masking.
ForwardTrace teacher_forward(const ModelParams& params, const SegmentedConversation& conv,
                             const ForwardOptions& options = {});

// Reverse pass from `loss` (a scalar node of trace.graph). Every trainable
// tensor gets an entry; frozen tensors get none.
GradientSet gradients(ForwardTrace& trace, ag::Var loss);

// JSON container: {"format", "version", "model", "vocab_size", "vocab_fingerprint",
// "tensors": [{"name", "shape": [rows, cols], "data": [row-major values]}]}.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const NexusConfig& nexus,
                     std::uint64_t vocab_fingerprint);

struct Checkpoint {
    ModelParams params;
    NexusConfig nexus;
    std::uint64_t vocab_fingerprint = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sonic
