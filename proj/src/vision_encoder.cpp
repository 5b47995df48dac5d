#include "serum/vision_encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace serum {

namespace F = torch::nn::functional;

namespace {

torch::nn::LayerNorm layer_norm(int64_t dim) {
    return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}));
}

// (B, H, W, C) -> (B * windows, wh * ww, C)
torch::Tensor partition(const torch::Tensor& x, int64_t wh, int64_t ww) {
    const int64_t b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
    return x.view({b, h / wh, wh, w / ww, ww, c})
        .permute({0, 1, 3, 2, 4, 5})
        .reshape({-1, wh * ww, c});
}

torch::Tensor unpartition(const torch::Tensor& windows, int64_t wh, int64_t ww, int64_t b,
                          int64_t h, int64_t w) {
    const int64_t c = windows.size(-1);
    return windows.view({b, h / wh, w / ww, wh, ww, c})
        .permute({0, 1, 3, 2, 4, 5})
        .reshape({b, h, w, c});
}

// Region labels of the cyclically shifted grid; tokens from different
// regions must not attend to each other inside one window.
torch::Tensor shifted_window_mask(int64_t gh, int64_t gw, int64_t wh, int64_t ww, int64_t sh,
                                  int64_t sw) {
    auto labels = torch::zeros({1, gh, gw, 1});
    auto bands = [](int64_t size, int64_t win, int64_t shift) {
        std::vector<std::pair<int64_t, int64_t>> out{{0, size - win}};
        if (shift > 0) {
            out.emplace_back(size - win, size - shift);
            out.emplace_back(size - shift, size);
        } else {
            out.emplace_back(size - win, size);
        }
        return out;
    };
    float id = 0.0f;
    for (const auto& [r0, r1] : bands(gh, wh, sh)) {
        for (const auto& [c0, c1] : bands(gw, ww, sw)) {
            labels.slice(1, r0, r1).slice(2, c0, c1).fill_(id);
            id += 1.0f;
        }
    }
    const auto windows = partition(labels, wh, ww).squeeze(-1);  // (nW, n)
    const auto diff = windows.unsqueeze(1) - windows.unsqueeze(2);
    return torch::where(diff != 0, torch::full_like(diff, -100.0), torch::zeros_like(diff));
}

}  // namespace

WindowAttentionImpl::WindowAttentionImpl(int64_t dim, int64_t heads, int64_t window_h,
                                         int64_t window_w)
    : heads_(heads) {
    if (dim % heads != 0) {
        throw std::invalid_argument("window attention width " + std::to_string(dim) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    }
    qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
    proj = register_module("proj", torch::nn::Linear(dim, dim));
    relative_bias_table = register_parameter(
        "relative_bias_table",
        torch::randn({(2 * window_h - 1) * (2 * window_w - 1), heads}) * 0.02);

    const auto rows = torch::arange(window_h).repeat_interleave(window_w);
    const auto cols = torch::arange(window_w).repeat({window_h});
    const auto dr = rows.unsqueeze(1) - rows.unsqueeze(0) + (window_h - 1);
    const auto dc = cols.unsqueeze(1) - cols.unsqueeze(0) + (window_w - 1);
    relative_index_ = (dr * (2 * window_w - 1) + dc).flatten();
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
    const int64_t bw = x.size(0), n = x.size(1), c = x.size(2);
    const int64_t hd = c / heads_;
    const auto parts = qkv(x).view({bw, n, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
    const auto q = parts[0], k = parts[1], v = parts[2];
    auto attn = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
    const auto bias =
        relative_bias_table.index_select(0, relative_index_).view({n, n, heads_}).permute({2, 0, 1});
    attn = attn + bias.unsqueeze(0);
    if (mask.defined()) {
        const int64_t nw = mask.size(0);
        attn = attn.view({bw / nw, nw, heads_, n, n}) + mask.to(attn.dtype()).unsqueeze(1).unsqueeze(0);
        attn = attn.view({bw, heads_, n, n});
    }
    const auto out = torch::matmul(torch::softmax(attn, -1), v);
    return proj(out.transpose(1, 2).reshape({bw, n, c}));
}

SwinBlockImpl::SwinBlockImpl(int64_t dim, int64_t heads, int64_t window, bool shifted,
                             int64_t grid_h, int64_t grid_w, int64_t mlp_ratio)
    : window_h_(std::min(window, grid_h)),
      window_w_(std::min(window, grid_w)),
      shift_h_(shifted && grid_h > window ? window / 2 : 0),
      shift_w_(shifted && grid_w > window ? window / 2 : 0) {
    if (grid_h % window_h_ != 0 || grid_w % window_w_ != 0) {
        throw std::invalid_argument("window " + std::to_string(window) + " does not tile grid " +
                                    std::to_string(grid_h) + "x" + std::to_string(grid_w));
    }
    norm1 = register_module("norm1", layer_norm(dim));
    attn = register_module("attn", WindowAttention(dim, heads, window_h_, window_w_));
    norm2 = register_module("norm2", layer_norm(dim));
    fc1 = register_module("fc1", torch::nn::Linear(dim, dim * mlp_ratio));
    fc2 = register_module("fc2", torch::nn::Linear(dim * mlp_ratio, dim));
    if (shift_h_ > 0 || shift_w_ > 0) {
        shift_mask_ = shifted_window_mask(grid_h, grid_w, window_h_, window_w_, shift_h_, shift_w_);
    }
}

torch::Tensor SwinBlockImpl::forward(const torch::Tensor& x) {
    const int64_t b = x.size(0), h = x.size(1), w = x.size(2);
    auto y = norm1(x);
    const bool shifted = shift_mask_.defined();
    if (shifted) {
        y = torch::roll(y, {-shift_h_, -shift_w_}, {1, 2});
    }
    y = attn(partition(y, window_h_, window_w_), shift_mask_);
    y = unpartition(y, window_h_, window_w_, b, h, w);
    if (shifted) {
        y = torch::roll(y, {shift_h_, shift_w_}, {1, 2});
    }
    const auto mid = x + y;
    return mid + fc2(F::gelu(fc1(norm2(mid))));
}

PatchMergingImpl::PatchMergingImpl(int64_t dim) {
    norm = register_module("norm", layer_norm(4 * dim));
    reduction = register_module("reduction",
                                torch::nn::Linear(torch::nn::LinearOptions(4 * dim, 2 * dim).bias(false)));
}

torch::Tensor PatchMergingImpl::forward(const torch::Tensor& x) {
    using torch::indexing::None;
    using torch::indexing::Slice;
    const auto x0 = x.index({Slice(), Slice(0, None, 2), Slice(0, None, 2)});
    const auto x1 = x.index({Slice(), Slice(1, None, 2), Slice(0, None, 2)});
    const auto x2 = x.index({Slice(), Slice(0, None, 2), Slice(1, None, 2)});
    const auto x3 = x.index({Slice(), Slice(1, None, 2), Slice(1, None, 2)});
    return reduction(norm(torch::cat({x0, x1, x2, x3}, -1)));
}

VisionEncoderImpl::VisionEncoderImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    const int stages_n = static_cast<int>(config_.encoder_stage_depths.size());
    patch_embed = register_module(
        "patch_embed",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(config_.image_channels, config_.stage_dim(0),
                                                   config_.patch_size)
                              .stride(config_.patch_size)));
    patch_norm = register_module("patch_norm", layer_norm(config_.stage_dim(0)));
    for (int s = 0; s < stages_n; ++s) {
        const int64_t dim = config_.stage_dim(s);
        const int64_t gh = config_.image_height / (config_.patch_size << s);
        const int64_t gw = config_.image_width / (config_.patch_size << s);
        std::vector<SwinBlock> blocks;
        for (int i = 0; i < config_.encoder_stage_depths[s]; ++i) {
            blocks.push_back(register_module(
                "stage" + std::to_string(s) + "_block" + std::to_string(i),
                SwinBlock(dim, dim / config_.encoder_head_dim, config_.encoder_window, i % 2 == 1,
                          gh, gw, config_.mlp_ratio)));
        }
        stages.push_back(std::move(blocks));
        if (s + 1 < stages_n) {
            merges.push_back(register_module("merge" + std::to_string(s), PatchMerging(dim)));
        }
    }
    const int64_t d = config_.embed_dim;
    final_norm = register_module("final_norm", layer_norm(d));
    pixel_proj = register_module("pixel_proj", torch::nn::Linear(d, d));
    position = register_parameter(
        "position", torch::randn({config_.pixel_height(), config_.pixel_width(), d}) * 0.02);
    upsample_rows_ = bilinear_upsample_matrix(config_.grid_height(), config_.upsample_factor);
    upsample_cols_ = bilinear_upsample_matrix(config_.grid_width(), config_.upsample_factor);
}

FeatureMap VisionEncoderImpl::encode(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != config_.image_height ||
        images.size(2) != config_.image_width || images.size(3) != config_.image_channels) {
        throw std::invalid_argument(
            "encoder expects (B, " + std::to_string(config_.image_height) + ", " +
            std::to_string(config_.image_width) + ", " + std::to_string(config_.image_channels) +
            ") input, got " + c10::str(images.sizes()));
    }
    if (!torch::isfinite(images).all().item<bool>()) {
        throw std::invalid_argument("encoder input contains non-finite values");
    }
    auto x = patch_embed(images.permute({0, 3, 1, 2})).permute({0, 2, 3, 1});
    x = patch_norm(x);
    for (std::size_t s = 0; s < stages.size(); ++s) {
        for (auto& block : stages[s]) {
            x = block(x);
        }
        if (s < merges.size()) {
            x = merges[s](x);
        }
    }
    return FeatureMap{final_norm(x)};
}

PixelEmbedding VisionEncoderImpl::upsample_and_position(const FeatureMap& features) {
    const auto& g = features.grid;
    if (g.dim() != 4 || g.size(1) != upsample_rows_.size(1) || g.size(2) != upsample_cols_.size(1) ||
        g.size(3) != config_.embed_dim) {
        throw std::invalid_argument("feature map shape " + c10::str(g.sizes()) +
                                    " does not match the encoder config");
    }
    const auto uh = upsample_rows_.to(g.dtype());
    const auto uw = upsample_cols_.to(g.dtype());
    auto up = torch::einsum("ih,bhwd->biwd", {uh, g});
    up = torch::einsum("jw,biwd->bijd", {uw, up});
    return PixelEmbedding{pixel_proj(up) + position};
}

torch::Tensor bilinear_upsample_matrix(int64_t in_size, int64_t factor) {
    const int64_t out_size = in_size * factor;
    auto m = torch::zeros({out_size, in_size}, torch::kDouble);
    auto acc = m.accessor<double, 2>();
    for (int64_t i = 0; i < out_size; ++i) {
        const int64_t i0 = i / factor;
        const double frac = static_cast<double>(i - i0 * factor) / static_cast<double>(factor);
        const int64_t i1 = std::min(i0 + 1, in_size - 1);
        acc[i][i0] += 1.0 - frac;
        acc[i][i1] += frac;
    }
    return m;
}

torch::Tensor image_to_tensor(const Image& image) {
    return torch::from_blob(const_cast<float*>(image.data.data()),
                            {1, image.height, image.width, image.channels}, torch::kFloat)
        .clone();
}

}  // namespace serum
