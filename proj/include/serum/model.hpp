#pragma once

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "serum/config.hpp"
#include "serum/document.hpp"
#include "serum/kv_tree.hpp"
#include "serum/query_decoder.hpp"
#include "serum/text_decoder.hpp"
#include "serum/token_merge.hpp"
#include "serum/vision_encoder.hpp"
#include "serum/vocabulary.hpp"

namespace serum {

/// Task prompts every model vocabulary carries.
inline constexpr const char* kOcrTask = "ocr";
inline constexpr const char* kExtractTask = "extract";

/// Vocabulary over `charset` with the task prompts and the given keys registered.
Vocabulary make_vocabulary(const std::string& charset, const std::vector<std::string>& keys);

/// The full model. Every shared submodule is registered exactly once here;
/// the query and text views hold the same module handles.
class SerumModelImpl : public torch::nn::Module {
public:
    SerumModelImpl(const ModelConfig& config, Vocabulary vocab);

    const ModelConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }

    QueryDecoder query_decoder();
    TextDecoder text_decoder();

    VisionEncoder encoder{nullptr};
    DecoderStack stack{nullptr};
    torch::nn::Embedding token_embedding{nullptr};
    torch::Tensor token_pos;   // (L, d)
    torch::Tensor query_slots;  // (N, d)
    torch::nn::Linear mask_head{nullptr};
    torch::nn::Linear class_head{nullptr};
    torch::Tensor step_pos;  // (max_decode_len, d)
    torch::nn::Linear output_head{nullptr};
    torch::nn::Linear merge_value{nullptr};  // W_v of the background fold-in

private:
    ModelConfig config_;
    Vocabulary vocab_;
};
TORCH_MODULE(SerumModel);

/// Encoder and query-decoder outputs for a batch of images.
struct VisualForward {
    FeatureMap features;
    PixelEmbedding pixels;
    QueryBundle bundle;
};

/// images (B, H, W, C); one query list per image.
VisualForward run_visual(SerumModel& model, const torch::Tensor& images,
                         const std::vector<std::vector<QuerySpec>>& queries);

/// Merged context of batch element b from its live-query score maps.
MergedContext merge_for(SerumModel& model, const VisualForward& fwd, int64_t b, double alpha);

/// User-facing extraction output.
struct ExtractionResult {
    KvTree tree;
    std::vector<std::pair<std::string, std::vector<TokenId>>> field_tokens;
    bool malformed = false;
    int64_t keep = 0;  // K
    std::vector<int64_t> foreground_indices;
    torch::Tensor scores;  // E_score of the live queries, (n, sh, sw)
    double decode_ms = 0.0;
};

/// Keys as live queries, one shared merged context, one greedy stream per
/// key fed that key's Q row. Throws std::invalid_argument on an empty or
/// duplicated key list.
ExtractionResult prompt_extract(SerumModel& model, const Image& image,
                                const std::vector<std::string>& keys, double alpha);

/// Task prompt as the single query; decodes one serialised sequence and
/// parses it back into a tree.
ExtractionResult total_extract(SerumModel& model, const Image& image, double alpha);

}  // namespace serum
