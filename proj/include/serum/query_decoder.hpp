#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "serum/layers.hpp"
#include "serum/vision_encoder.hpp"
#include "serum/vocabulary.hpp"

namespace serum {

/// One query slot: a learnable slot, a text string (key, question, snippet)
/// or a task-name prompt.
struct QuerySpec {
    enum class Kind { Slot, Text, Task };
    Kind kind = Kind::Slot;
    std::string text;

    static QuerySpec slot() { return {Kind::Slot, {}}; }
    static QuerySpec of_text(std::string s) { return {Kind::Text, std::move(s)}; }
    static QuerySpec task(std::string name) { return {Kind::Task, std::move(name)}; }
};

/// N query vectors plus the mask of live slots.
struct QueryEmbedding {
    torch::Tensor queries;   // (N, d)
    torch::Tensor validity;  // (N,) bool
};

/// Query decoder outputs for a batch. Score tensors are kept as logits too
/// so losses can use numerically stable forms.
struct QueryBundle {
    torch::Tensor queries;       // Q: (B, N, d), final layer
    torch::Tensor mask_embed;    // E_mask: (B, N, d), final layer
    torch::Tensor class_logits;  // (B, N, 2): [text, no-object]
    torch::Tensor score_logits;  // (B, N, sh, sw), final layer
    torch::Tensor scores;        // E_score = sigmoid(score_logits)
    std::vector<torch::Tensor> per_layer_mask_embed;
    std::vector<torch::Tensor> per_layer_score_logits;
    torch::Tensor validity;  // (B, N) bool

    std::size_t layers() const { return per_layer_mask_embed.size(); }
};

/// Query-mode view of the shared decoder: bidirectional self-attention over
/// the N queries, cross-attention to the visual tokens.
struct QueryDecoder {
    DecoderStack stack{nullptr};
    torch::nn::Embedding token_embedding{nullptr};
    torch::Tensor token_pos;  // (L, d) positions of visual tokens
    torch::Tensor slots;      // (N, d) learnable slot embeddings
    torch::nn::Linear mask_head{nullptr};
    torch::nn::Linear class_head{nullptr};

    /// Empty `specs` yields all N learnable slots, every one live. Otherwise
    /// text queries are mean-pooled character embeddings, task prompts are the
    /// embedding of their `<task:name>` token, explicit Slot specs use the
    /// slot parameter at their position, and the list is padded to N with
    /// non-live slots. Throws std::invalid_argument on an empty text query,
    /// an unregistered task, or more than N specs.
    QueryEmbedding embed_queries(const Vocabulary& vocab, const std::vector<QuerySpec>& specs);

    /// queries (B, N, d), validity (B, N); with null `pixels` the score
    /// fields stay undefined.
    QueryBundle decode(const FeatureMap& features, const torch::Tensor& queries,
                       const torch::Tensor& validity, const PixelEmbedding* pixels);
};

/// E_score logits: <E'_pixel[b, i, j, :], E_mask[b, q, :]> as (B, N, sh, sw).
torch::Tensor mask_logits(const PixelEmbedding& pixels, const torch::Tensor& mask_embed);

/// sigmoid(mask_logits).
torch::Tensor predict_masks(const PixelEmbedding& pixels, const torch::Tensor& mask_embed);

}  // namespace serum
