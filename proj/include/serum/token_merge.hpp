#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "serum/config.hpp"

namespace serum {

/// Fused visual context handed to the text decoder for one sample.
struct MergedContext {
    torch::Tensor context;                   // (K, d) = F_f + F_b
    std::vector<int64_t> foreground_indices;  // K token indices, descending score
    torch::Tensor token_scores;               // (L,) pooled, query-averaged
    double alpha = 1.0;
    int64_t keep = 0;  // K
};

struct Foreground {
    torch::Tensor tokens;                     // F_f: (K, d), score-weighted
    std::vector<int64_t> indices;             // K indices, descending score
    torch::Tensor background;                 // f_r: (L-K, d), raw rows
    std::vector<int64_t> background_indices;  // ascending
};

/// K = max(1, round-half-up(alpha * L)).
int64_t keep_count(double alpha, int64_t tokens);

/// scores (N, s*h, s*w), validity (N,) bool -> (h*w,) row-major: each live
/// query's map is average-pooled over s x s blocks, then averaged across live
/// queries. Throws std::invalid_argument when no query is live.
torch::Tensor pool_scores(const torch::Tensor& scores, const torch::Tensor& validity,
                          int64_t factor);

/// Top-K rows of z by score (ties favour the lower index) weighted by their
/// score; the rest stay raw in ascending index order. Throws
/// std::invalid_argument for alpha outside (0, 1] or non-finite scores.
Foreground select_foreground(const torch::Tensor& z, const torch::Tensor& token_scores,
                             double alpha);

/// softmax(F_f f_r^T / sqrt(d)) (f_r W_v^T); zeros when f_r is empty.
torch::Tensor merge_background(const torch::Tensor& foreground, const torch::Tensor& background,
                               torch::nn::Linear& value_proj);

/// Attention weights of merge_background, (K, L-K).
torch::Tensor background_weights(const torch::Tensor& foreground, const torch::Tensor& background);

/// F_f + F_b; throws std::invalid_argument on a shape mismatch.
torch::Tensor fuse(const torch::Tensor& foreground, const torch::Tensor& background_term);

/// pool -> select -> merge -> fuse for one sample. z is (L, d).
MergedContext merge_tokens(const torch::Tensor& z, const torch::Tensor& token_scores, double alpha,
                           torch::nn::Linear& value_proj);

/// Training: one uniform draw from [alpha_min, alpha_max]. Inference:
/// `fixed_alpha`, which must be present and lie in (0, 1].
double sample_alpha(std::mt19937_64& rng, bool training, std::optional<double> fixed_alpha,
                    const ModelConfig& config);

}  // namespace serum
