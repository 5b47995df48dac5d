#pragma once

#include <utility>
#include <vector>

#include <torch/torch.h>

namespace serum {

/// Multi-head scaled dot-product attention with separate q/k/v projections.
///
/// Shapes: query (B, Tq, d), key/value (B, Tk, d). `attn_bias` is additive
/// and broadcast against (B, heads, Tq, Tk); `key_padding` is a (B, Tk)
/// bool tensor where true marks keys to ignore.
class AttentionImpl : public torch::nn::Module {
public:
    AttentionImpl(int64_t dim, int64_t heads);

    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key,
                          const torch::Tensor& value, const torch::Tensor& attn_bias = {},
                          const torch::Tensor& key_padding = {});

    /// Projected keys and values split into heads: (B, heads, Tk, head_dim).
    std::pair<torch::Tensor, torch::Tensor> project_kv(const torch::Tensor& key,
                                                       const torch::Tensor& value);
    torch::Tensor attend(const torch::Tensor& query, const torch::Tensor& keys,
                         const torch::Tensor& values, const torch::Tensor& attn_bias = {},
                         const torch::Tensor& key_padding = {});

    int64_t heads() const { return heads_; }

    torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

private:
    torch::Tensor split_heads(const torch::Tensor& x) const;

    int64_t heads_;
    int64_t head_dim_;
};
TORCH_MODULE(Attention);

/// Per-layer self-attention key/value cache for incremental decoding.
struct LayerCache {
    torch::Tensor self_keys;    // (B, heads, t, head_dim)
    torch::Tensor self_values;
    torch::Tensor cross_keys;   // (B, heads, M, head_dim)
    torch::Tensor cross_values;
};

/// Pre-norm transformer decoder layer: self-attention, cross-attention,
/// two-layer GELU MLP. Memory positions are added to cross-attention keys.
class DecoderLayerImpl : public torch::nn::Module {
public:
    DecoderLayerImpl(int64_t dim, int64_t heads, int64_t mlp_ratio);

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& memory,
                          const torch::Tensor& memory_pos, const torch::Tensor& self_bias,
                          const torch::Tensor& self_padding, const torch::Tensor& memory_padding);

    /// Precomputes cross-attention keys/values of `memory` into `cache`.
    void prime(const torch::Tensor& memory, const torch::Tensor& memory_pos, LayerCache& cache);
    /// Processes new positions x (B, t_new, d) given cached earlier ones.
    torch::Tensor step(const torch::Tensor& x, LayerCache& cache,
                       const torch::Tensor& memory_padding);

    torch::nn::LayerNorm norm_self{nullptr}, norm_cross{nullptr}, norm_mlp{nullptr};
    Attention self_attn{nullptr}, cross_attn{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(DecoderLayer);

/// The decoder stack shared by query decoding and text decoding.
class DecoderStackImpl : public torch::nn::Module {
public:
    DecoderStackImpl(int64_t dim, int64_t heads, int64_t mlp_ratio, int64_t layers);

    /// Hidden state after every layer, each passed through the final norm.
    std::vector<torch::Tensor> forward_layers(const torch::Tensor& x, const torch::Tensor& memory,
                                              const torch::Tensor& memory_pos,
                                              const torch::Tensor& self_bias,
                                              const torch::Tensor& self_padding,
                                              const torch::Tensor& memory_padding);

    /// Final-layer output only.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& memory,
                          const torch::Tensor& memory_pos, const torch::Tensor& self_bias,
                          const torch::Tensor& self_padding, const torch::Tensor& memory_padding);

    std::size_t depth() const { return layers.size(); }

    std::vector<DecoderLayer> layers;
    torch::nn::LayerNorm final_norm{nullptr};
};
TORCH_MODULE(DecoderStack);

/// Additive causal mask (T, T): 0 on and below the diagonal, -inf above.
torch::Tensor causal_bias(int64_t length, const torch::TensorOptions& options);

}  // namespace serum
