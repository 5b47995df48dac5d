#include "serum/model.hpp"

#include <chrono>
#include <set>
#include <stdexcept>

namespace serum {

Vocabulary make_vocabulary(const std::string& charset, const std::vector<std::string>& keys) {
    Vocabulary vocab(charset);
    vocab.register_task(kOcrTask);
    vocab.register_task(kExtractTask);
    for (const auto& key : keys) {
        vocab.register_key(key);
    }
    return vocab;
}

SerumModelImpl::SerumModelImpl(const ModelConfig& config, Vocabulary vocab)
    : config_(config), vocab_(std::move(vocab)) {
    config_.validate();
    const int64_t d = config_.embed_dim;
    const auto v = static_cast<int64_t>(vocab_.size());
    encoder = register_module("encoder", VisionEncoder(config_));
    stack = register_module(
        "stack", DecoderStack(d, config_.decoder_heads, config_.mlp_ratio, config_.decoder_layers));
    token_embedding = register_module("token_embedding", torch::nn::Embedding(v, d));
    token_pos = register_parameter("token_pos", torch::randn({config_.num_tokens(), d}) * 0.02);
    query_slots = register_parameter("query_slots", torch::randn({config_.num_queries, d}));
    mask_head = register_module("mask_head", torch::nn::Linear(d, d));
    class_head = register_module("class_head", torch::nn::Linear(d, 2));
    step_pos = register_parameter("step_pos", torch::randn({config_.max_decode_len, d}) * 0.02);
    output_head = register_module("output_head", torch::nn::Linear(d, v));
    merge_value = register_module(
        "merge_value", torch::nn::Linear(torch::nn::LinearOptions(d, d).bias(false)));
}

QueryDecoder SerumModelImpl::query_decoder() {
    return QueryDecoder{stack, token_embedding, token_pos, query_slots, mask_head, class_head};
}

TextDecoder SerumModelImpl::text_decoder() {
    return TextDecoder{stack, token_embedding, token_pos, step_pos, output_head};
}

VisualForward run_visual(SerumModel& model, const torch::Tensor& images,
                         const std::vector<std::vector<QuerySpec>>& queries) {
    if (static_cast<int64_t>(queries.size()) != images.size(0)) {
        throw std::invalid_argument("one query list per image is required");
    }
    VisualForward out;
    out.features = model->encoder->encode(images);
    out.pixels = model->encoder->upsample_and_position(out.features);
    auto qd = model->query_decoder();
    std::vector<torch::Tensor> rows, valid;
    for (const auto& specs : queries) {
        auto emb = qd.embed_queries(model->vocab(), specs);
        rows.push_back(emb.queries);
        valid.push_back(emb.validity);
    }
    out.bundle = qd.decode(out.features, torch::stack(rows), torch::stack(valid), &out.pixels);
    return out;
}

MergedContext merge_for(SerumModel& model, const VisualForward& fwd, int64_t b, double alpha) {
    const auto scores = pool_scores(fwd.bundle.scores[b], fwd.bundle.validity[b],
                                    model->config().upsample_factor);
    return merge_tokens(fwd.features.tokens()[b], scores, alpha, model->merge_value);
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
        .count();
}

torch::Tensor live_scores(const VisualForward& fwd) {
    const auto live = fwd.bundle.validity[0].nonzero().flatten();
    return fwd.bundle.scores[0].index_select(0, live).detach();
}

}  // namespace

ExtractionResult prompt_extract(SerumModel& model, const Image& image,
                                const std::vector<std::string>& keys, double alpha) {
    if (keys.empty()) {
        throw std::invalid_argument("prompt extraction needs at least one key");
    }
    if (std::set<std::string>(keys.begin(), keys.end()).size() != keys.size()) {
        throw std::invalid_argument("prompt extraction keys must be unique");
    }
    torch::NoGradGuard no_grad;
    std::vector<QuerySpec> specs;
    for (const auto& key : keys) {
        specs.push_back(QuerySpec::of_text(key));
    }
    const auto fwd = run_visual(model, image_to_tensor(image), {specs});
    const auto ctx = merge_for(model, fwd, 0, alpha);
    auto td = model->text_decoder();
    std::vector<const MergedContext*> contexts(keys.size(), &ctx);
    std::vector<torch::Tensor> rows;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        rows.push_back(fwd.bundle.queries[0].slice(0, static_cast<int64_t>(i), static_cast<int64_t>(i) + 1));
    }
    const auto memory = td.build_memory(contexts, rows);
    const auto start = std::chrono::steady_clock::now();
    const auto streams = td.generate(memory, model->config().max_decode_len);
    ExtractionResult result;
    result.decode_ms = elapsed_ms(start);
    for (std::size_t i = 0; i < keys.size(); ++i) {
        result.tree.push_back(KvNode{keys[i], model->vocab().decode_chars(streams[i])});
        result.field_tokens.emplace_back(keys[i], streams[i]);
    }
    result.keep = ctx.keep;
    result.foreground_indices = ctx.foreground_indices;
    result.scores = live_scores(fwd);
    return result;
}

ExtractionResult total_extract(SerumModel& model, const Image& image, double alpha) {
    torch::NoGradGuard no_grad;
    const auto fwd = run_visual(model, image_to_tensor(image), {{QuerySpec::task(kExtractTask)}});
    const auto ctx = merge_for(model, fwd, 0, alpha);
    auto td = model->text_decoder();
    const auto memory = td.build_memory({&ctx}, {fwd.bundle.queries[0].slice(0, 0, 1)});
    const auto start = std::chrono::steady_clock::now();
    const auto streams = td.generate(memory, model->config().max_decode_len);
    ExtractionResult result;
    result.decode_ms = elapsed_ms(start);
    auto parsed = parse_total(model->vocab(), streams[0]);
    result.tree = std::move(parsed.tree);
    result.malformed = parsed.malformed;
    result.field_tokens.emplace_back(kExtractTask, streams[0]);
    result.keep = ctx.keep;
    result.foreground_indices = ctx.foreground_indices;
    result.scores = live_scores(fwd);
    return result;
}

}  // namespace serum
