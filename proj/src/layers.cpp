#include "serum/layers.hpp"

#include <cmath>
#include <limits>

namespace serum {

namespace F = torch::nn::functional;

AttentionImpl::AttentionImpl(int64_t dim, int64_t heads)
    : heads_(heads), head_dim_(dim / heads) {
    TORCH_CHECK(dim % heads == 0, "attention width ", dim, " not divisible by ", heads, " heads");
    q_proj = register_module("q_proj", torch::nn::Linear(dim, dim));
    k_proj = register_module("k_proj", torch::nn::Linear(dim, dim));
    v_proj = register_module("v_proj", torch::nn::Linear(dim, dim));
    out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::split_heads(const torch::Tensor& x) const {
    return x.view({x.size(0), x.size(1), heads_, head_dim_}).transpose(1, 2);
}

std::pair<torch::Tensor, torch::Tensor> AttentionImpl::project_kv(const torch::Tensor& key,
                                                                  const torch::Tensor& value) {
    return {split_heads(k_proj(key)), split_heads(v_proj(value))};
}

torch::Tensor AttentionImpl::attend(const torch::Tensor& query, const torch::Tensor& keys,
                                    const torch::Tensor& values, const torch::Tensor& attn_bias,
                                    const torch::Tensor& key_padding) {
    const auto q = split_heads(q_proj(query));
    auto scores = torch::matmul(q, keys.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_));
    if (attn_bias.defined()) {
        scores = scores + attn_bias;
    }
    if (key_padding.defined()) {
        scores = scores.masked_fill(key_padding.view({key_padding.size(0), 1, 1, key_padding.size(1)}),
                                    -std::numeric_limits<double>::infinity());
    }
    const auto out = torch::matmul(torch::softmax(scores, -1), values);
    return out_proj(out.transpose(1, 2).reshape({query.size(0), query.size(1), heads_ * head_dim_}));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key,
                                     const torch::Tensor& value, const torch::Tensor& attn_bias,
                                     const torch::Tensor& key_padding) {
    auto [k, v] = project_kv(key, value);
    return attend(query, k, v, attn_bias, key_padding);
}

DecoderLayerImpl::DecoderLayerImpl(int64_t dim, int64_t heads, int64_t mlp_ratio) {
    norm_self = register_module("norm_self", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm_cross = register_module("norm_cross", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm_mlp = register_module("norm_mlp", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    self_attn = register_module("self_attn", Attention(dim, heads));
    cross_attn = register_module("cross_attn", Attention(dim, heads));
    fc1 = register_module("fc1", torch::nn::Linear(dim, dim * mlp_ratio));
    fc2 = register_module("fc2", torch::nn::Linear(dim * mlp_ratio, dim));
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& memory,
                                        const torch::Tensor& memory_pos,
                                        const torch::Tensor& self_bias,
                                        const torch::Tensor& self_padding,
                                        const torch::Tensor& memory_padding) {
    auto h = norm_self(x);
    auto y = x + self_attn(h, h, h, self_bias, self_padding);
    h = norm_cross(y);
    const auto keys = memory_pos.defined() ? memory + memory_pos : memory;
    y = y + cross_attn(h, keys, memory, torch::Tensor(), memory_padding);
    return y + fc2(F::gelu(fc1(norm_mlp(y))));
}

void DecoderLayerImpl::prime(const torch::Tensor& memory, const torch::Tensor& memory_pos,
                             LayerCache& cache) {
    const auto keys = memory_pos.defined() ? memory + memory_pos : memory;
    std::tie(cache.cross_keys, cache.cross_values) = cross_attn->project_kv(keys, memory);
    cache.self_keys = torch::Tensor();
    cache.self_values = torch::Tensor();
}

torch::Tensor DecoderLayerImpl::step(const torch::Tensor& x, LayerCache& cache,
                                     const torch::Tensor& memory_padding) {
    const auto h = norm_self(x);
    auto [k, v] = self_attn->project_kv(h, h);
    const int64_t past = cache.self_keys.defined() ? cache.self_keys.size(2) : 0;
    cache.self_keys = past ? torch::cat({cache.self_keys, k}, 2) : k;
    cache.self_values = past ? torch::cat({cache.self_values, v}, 2) : v;
    torch::Tensor bias;
    if (x.size(1) > 1) {
        // New positions see all cached ones plus the causal part of themselves.
        const int64_t total = past + x.size(1);
        bias = causal_bias(total, x.options()).slice(0, past, total);
    }
    auto y = x + self_attn->attend(h, cache.self_keys, cache.self_values, bias);
    y = y + cross_attn->attend(norm_cross(y), cache.cross_keys, cache.cross_values, {},
                               memory_padding);
    return y + fc2(F::gelu(fc1(norm_mlp(y))));
}

DecoderStackImpl::DecoderStackImpl(int64_t dim, int64_t heads, int64_t mlp_ratio,
                                   int64_t layer_count) {
    for (int64_t i = 0; i < layer_count; ++i) {
        layers.push_back(register_module("layer" + std::to_string(i),
                                         DecoderLayer(dim, heads, mlp_ratio)));
    }
    final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
}

std::vector<torch::Tensor> DecoderStackImpl::forward_layers(
    const torch::Tensor& x, const torch::Tensor& memory, const torch::Tensor& memory_pos,
    const torch::Tensor& self_bias, const torch::Tensor& self_padding,
    const torch::Tensor& memory_padding) {
    std::vector<torch::Tensor> outputs;
    auto h = x;
    for (auto& layer : layers) {
        h = layer(h, memory, memory_pos, self_bias, self_padding, memory_padding);
        outputs.push_back(final_norm(h));
    }
    return outputs;
}

torch::Tensor DecoderStackImpl::forward(const torch::Tensor& x, const torch::Tensor& memory,
                                        const torch::Tensor& memory_pos,
                                        const torch::Tensor& self_bias,
                                        const torch::Tensor& self_padding,
                                        const torch::Tensor& memory_padding) {
    auto h = x;
    for (auto& layer : layers) {
        h = layer(h, memory, memory_pos, self_bias, self_padding, memory_padding);
    }
    return final_norm(h);
}

torch::Tensor causal_bias(int64_t length, const torch::TensorOptions& options) {
    return torch::full({length, length}, -std::numeric_limits<double>::infinity(), options)
        .triu(1);
}

}  // namespace serum
