#include "serum/token_merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace serum {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("alpha " + std::to_string(alpha) + " outside (0, 1]");
    }
}

torch::Tensor index_tensor(const std::vector<int64_t>& idx) {
    return torch::tensor(idx, torch::kLong);
}

}  // namespace

int64_t keep_count(double alpha, int64_t tokens) {
    check_alpha(alpha);
    const auto k = static_cast<int64_t>(std::floor(alpha * static_cast<double>(tokens) + 0.5));
    return std::clamp<int64_t>(k, 1, tokens);
}

torch::Tensor pool_scores(const torch::Tensor& scores, const torch::Tensor& validity,
                          int64_t factor) {
    if (scores.dim() != 3 || scores.size(1) % factor != 0 || scores.size(2) % factor != 0) {
        throw std::invalid_argument("score maps " + c10::str(scores.sizes()) +
                                    " are not a multiple of the upsample factor " +
                                    std::to_string(factor));
    }
    const auto live = validity.nonzero().flatten();
    if (live.numel() == 0) {
        throw std::invalid_argument("pool_scores needs at least one live query");
    }
    const auto pooled = torch::avg_pool2d(scores.index_select(0, live).unsqueeze(1), factor);
    return pooled.squeeze(1).mean(0).flatten();
}

Foreground select_foreground(const torch::Tensor& z, const torch::Tensor& token_scores,
                             double alpha) {
    const int64_t l = z.size(0);
    if (token_scores.dim() != 1 || token_scores.size(0) != l) {
        throw std::invalid_argument("token scores must be an L-vector matching z");
    }
    if (!torch::isfinite(token_scores).all().item<bool>()) {
        throw std::invalid_argument("token scores contain non-finite values");
    }
    const int64_t k = keep_count(alpha, l);
    const auto host = token_scores.detach().to(torch::kDouble).contiguous();
    const double* s = host.data_ptr<double>();
    std::vector<int64_t> order(static_cast<std::size_t>(l));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) { return s[a] > s[b]; });

    Foreground fg;
    fg.indices.assign(order.begin(), order.begin() + k);
    fg.background_indices.assign(order.begin() + k, order.end());
    std::sort(fg.background_indices.begin(), fg.background_indices.end());
    const auto idx = index_tensor(fg.indices);
    fg.tokens = z.index_select(0, idx) * token_scores.index_select(0, idx).unsqueeze(1);
    fg.background = fg.background_indices.empty()
                        ? z.new_empty({0, z.size(1)})
                        : z.index_select(0, index_tensor(fg.background_indices));
    return fg;
}

torch::Tensor background_weights(const torch::Tensor& foreground, const torch::Tensor& background) {
    const double scale = std::sqrt(static_cast<double>(foreground.size(1)));
    return torch::softmax(torch::matmul(foreground, background.t()) / scale, -1);
}

torch::Tensor merge_background(const torch::Tensor& foreground, const torch::Tensor& background,
                               torch::nn::Linear& value_proj) {
    if (background.size(0) == 0) {
        return torch::zeros_like(foreground);
    }
    return torch::matmul(background_weights(foreground, background), value_proj(background));
}

torch::Tensor fuse(const torch::Tensor& foreground, const torch::Tensor& background_term) {
    if (foreground.sizes() != background_term.sizes()) {
        throw std::invalid_argument("fuse shape mismatch: " + c10::str(foreground.sizes()) + " vs " +
                                    c10::str(background_term.sizes()));
    }
    return foreground + background_term;
}

MergedContext merge_tokens(const torch::Tensor& z, const torch::Tensor& token_scores, double alpha,
                           torch::nn::Linear& value_proj) {
    auto fg = select_foreground(z, token_scores, alpha);
    MergedContext out;
    out.context = fuse(fg.tokens, merge_background(fg.tokens, fg.background, value_proj));
    out.foreground_indices = std::move(fg.indices);
    out.token_scores = token_scores;
    out.alpha = alpha;
    out.keep = static_cast<int64_t>(out.foreground_indices.size());
    return out;
}

double sample_alpha(std::mt19937_64& rng, bool training, std::optional<double> fixed_alpha,
                    const ModelConfig& config) {
    if (!training) {
        if (!fixed_alpha) {
            throw std::invalid_argument("inference requires a fixed alpha");
        }
        check_alpha(*fixed_alpha);
        return *fixed_alpha;
    }
    if (config.alpha_min == config.alpha_max) {
        return config.alpha_min;
    }
    return std::uniform_real_distribution<double>(config.alpha_min, config.alpha_max)(rng);
}

}  // namespace serum
