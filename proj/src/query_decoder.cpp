#include "serum/query_decoder.hpp"

#include <stdexcept>

namespace serum {

QueryEmbedding QueryDecoder::embed_queries(const Vocabulary& vocab,
                                           const std::vector<QuerySpec>& specs) {
    const int64_t n = slots.size(0);
    if (static_cast<int64_t>(specs.size()) > n) {
        throw std::invalid_argument(std::to_string(specs.size()) + " queries exceed the " +
                                    std::to_string(n) + " available slots");
    }
    if (specs.empty()) {
        return {slots, torch::ones({n}, torch::kBool)};
    }
    std::vector<torch::Tensor> rows;
    auto validity = torch::zeros({n}, torch::kBool);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        validity[static_cast<int64_t>(i)] = true;
        switch (spec.kind) {
            case QuerySpec::Kind::Slot:
                rows.push_back(slots[static_cast<int64_t>(i)]);
                break;
            case QuerySpec::Kind::Text: {
                if (spec.text.empty()) {
                    throw std::invalid_argument("query " + std::to_string(i) + " is an empty string");
                }
                const auto ids = vocab.encode(spec.text);
                const auto t = torch::tensor(std::vector<int64_t>(ids.begin(), ids.end()), torch::kLong);
                rows.push_back(token_embedding(t).mean(0));
                break;
            }
            case QuerySpec::Kind::Task: {
                const auto id = vocab.task_token(spec.text);
                if (!id) {
                    throw std::invalid_argument("task '" + spec.text + "' is not registered");
                }
                rows.push_back(token_embedding(torch::tensor({static_cast<int64_t>(*id)}))[0]);
                break;
            }
        }
    }
    for (int64_t i = static_cast<int64_t>(specs.size()); i < n; ++i) {
        rows.push_back(slots[i]);
    }
    return {torch::stack(rows), validity};
}

QueryBundle QueryDecoder::decode(const FeatureMap& features, const torch::Tensor& queries,
                                 const torch::Tensor& validity, const PixelEmbedding* pixels) {
    const auto memory = features.tokens();
    if (memory.size(1) != token_pos.size(0) || queries.size(-1) != memory.size(-1)) {
        throw std::invalid_argument("query decoder shapes disagree with the feature map");
    }
    const auto hidden = stack->forward_layers(queries, memory, token_pos.unsqueeze(0), {},
                                              validity.logical_not(), {});
    QueryBundle out;
    out.validity = validity;
    for (const auto& h : hidden) {
        out.per_layer_mask_embed.push_back(mask_head(h));
        if (pixels != nullptr) {
            out.per_layer_score_logits.push_back(mask_logits(*pixels, out.per_layer_mask_embed.back()));
        }
    }
    out.queries = hidden.back();
    out.mask_embed = out.per_layer_mask_embed.back();
    out.class_logits = class_head(out.queries);
    if (pixels != nullptr) {
        out.score_logits = out.per_layer_score_logits.back();
        out.scores = torch::sigmoid(out.score_logits);
    }
    return out;
}

torch::Tensor mask_logits(const PixelEmbedding& pixels, const torch::Tensor& mask_embed) {
    return torch::einsum("bijd,bnd->bnij", {pixels.grid, mask_embed});
}

torch::Tensor predict_masks(const PixelEmbedding& pixels, const torch::Tensor& mask_embed) {
    return torch::sigmoid(mask_logits(pixels, mask_embed));
}

}  // namespace serum
