#pragma once

#include <vector>

#include <torch/torch.h>

#include "serum/config.hpp"
#include "serum/document.hpp"

namespace serum {

/// Encoder output grid (B, h, w, d).
struct FeatureMap {
    torch::Tensor grid;

    int64_t height() const { return grid.size(1); }
    int64_t width() const { return grid.size(2); }
    int64_t dim() const { return grid.size(3); }
    /// Row-major token view (B, h*w, d); a reshape of `grid`.
    torch::Tensor tokens() const { return grid.flatten(1, 2); }
};

/// Upsampled, position-augmented pixel embedding (B, s*h, s*w, d).
struct PixelEmbedding {
    torch::Tensor grid;
};

/// Window self-attention with a learned relative position bias.
class WindowAttentionImpl : public torch::nn::Module {
public:
    WindowAttentionImpl(int64_t dim, int64_t heads, int64_t window_h, int64_t window_w);
    /// x: (windows, n, dim) with n = window_h*window_w; mask: (windows_per_image, n, n)
    /// additive, or undefined.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

    torch::nn::Linear qkv{nullptr}, proj{nullptr};
    torch::Tensor relative_bias_table;

private:
    int64_t heads_;
    torch::Tensor relative_index_;  // (n*n) rows into the bias table
};
TORCH_MODULE(WindowAttention);

/// LN -> (shifted) window attention -> residual -> LN -> MLP -> residual.
class SwinBlockImpl : public torch::nn::Module {
public:
    /// The window is clipped to the grid; odd blocks (`shifted`) roll by half a
    /// window along every axis the grid is larger than the window.
    SwinBlockImpl(int64_t dim, int64_t heads, int64_t window, bool shifted, int64_t grid_h,
                  int64_t grid_w, int64_t mlp_ratio);
    /// x: (B, H, W, C).
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    WindowAttention attn{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};

private:
    int64_t window_h_, window_w_;
    int64_t shift_h_, shift_w_;
    torch::Tensor shift_mask_;  // (windows, n, n), 0 or -100
};
TORCH_MODULE(SwinBlock);

/// 2x2 neighbourhood concatenation, LN, linear 4C -> 2C.
class PatchMergingImpl : public torch::nn::Module {
public:
    explicit PatchMergingImpl(int64_t dim);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear reduction{nullptr};
};
TORCH_MODULE(PatchMerging);

/// Hierarchical shifted-window transformer encoder plus the pixel head that
/// upsamples its output and adds the learnable position map.
class VisionEncoderImpl : public torch::nn::Module {
public:
    explicit VisionEncoderImpl(const ModelConfig& config);

    /// images: (B, H, W, C) intensities. Throws std::invalid_argument on a
    /// shape mismatch or non-finite input.
    FeatureMap encode(const torch::Tensor& images);

    /// Bilinear upsample by s (output pixel i samples source coordinate i/s,
    /// so pixel s*k lands exactly on token k), 1x1 projection, plus P.
    PixelEmbedding upsample_and_position(const FeatureMap& features);

    torch::nn::Conv2d patch_embed{nullptr};
    torch::nn::LayerNorm patch_norm{nullptr};
    std::vector<std::vector<SwinBlock>> stages;
    std::vector<PatchMerging> merges;
    torch::nn::LayerNorm final_norm{nullptr};
    torch::nn::Linear pixel_proj{nullptr};
    torch::Tensor position;  // P: (s*h, s*w, d)

private:
    ModelConfig config_;
    torch::Tensor upsample_rows_;  // (s*h, h)
    torch::Tensor upsample_cols_;  // (s*w, w)
};
TORCH_MODULE(VisionEncoder);

/// Interpolation matrix (out, in) of the knot-aligned bilinear upsample.
torch::Tensor bilinear_upsample_matrix(int64_t in_size, int64_t factor);

/// (1, H, W, C) float tensor copy of an image.
torch::Tensor image_to_tensor(const Image& image);

}  // namespace serum
