#pragma once

#include <vector>

#include <torch/torch.h>

#include "serum/layers.hpp"
#include "serum/token_merge.hpp"
#include "serum/vocabulary.hpp"

namespace serum {

/// Cross-attention memory for a batch of decode streams: merged context rows
/// followed by query rows. Query rows carry no position; context rows carry
/// the position of the visual token they came from.
struct DecodeMemory {
    torch::Tensor memory;     // (B, M, d)
    torch::Tensor positions;  // (B, M, d)
    torch::Tensor padding;    // (B, M) bool, true = ignore

    int64_t batch() const { return memory.size(0); }
};

/// Incremental greedy-decoding state of B streams.
struct DecodeState {
    DecodeMemory memory;
    std::vector<std::vector<TokenId>> ids;  // per stream, starting with BOS
    std::vector<LayerCache> caches;
    int64_t processed = 0;  // positions already in the caches

    int64_t length() const { return ids.empty() ? 0 : static_cast<int64_t>(ids.front().size()); }
};

/// Text-mode view of the shared decoder: causal self-attention over token
/// embeddings, cross-attention over merged context plus query rows.
struct TextDecoder {
    DecoderStack stack{nullptr};
    torch::nn::Embedding token_embedding{nullptr};
    torch::Tensor token_pos;  // (L, d), shared with the query view
    torch::Tensor step_pos;   // (max_decode_len, d)
    torch::nn::Linear output_head{nullptr};

    int64_t max_length() const { return step_pos.size(0); }

    /// Stacks per-stream memories. `query_rows[b]` is (M_b, d); streams with
    /// fewer rows are padded. All contexts must share K.
    DecodeMemory build_memory(const std::vector<const MergedContext*>& contexts,
                              const std::vector<torch::Tensor>& query_rows) const;

    /// Full causal forward: ids (B, T) -> logits (B, T, V).
    torch::Tensor logits(const DecodeMemory& memory, const torch::Tensor& ids);

    DecodeState start(const DecodeMemory& memory);
    /// Logits (B, V) for the next position of every stream; processes the
    /// ids appended since the last call. Throws std::length_error once the
    /// state has reached max_length().
    torch::Tensor decode_step(DecodeState& state);

    /// Greedy decoding from BOS until EOS or max_len tokens; BOS and EOS are
    /// stripped. Throws std::invalid_argument when max_len > max_length().
    std::vector<std::vector<TokenId>> generate(const DecodeMemory& memory, int64_t max_len);

    /// Sum over positions of -log p(target | gold prefix), averaged over the
    /// batch. Each target must be non-empty, end with EOS, and contain no PAD.
    torch::Tensor teacher_forced_nll(const DecodeMemory& memory,
                                     const std::vector<std::vector<TokenId>>& targets);

private:
    torch::Tensor embed(const torch::Tensor& ids, int64_t offset);
};

/// Checks the teacher-forcing target contract; throws std::invalid_argument.
void validate_target(const std::vector<TokenId>& target, int64_t max_length);

}  // namespace serum
