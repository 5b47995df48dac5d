#include "serum/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "serum/kv_tree.hpp"
#include "serum/log.hpp"

namespace serum {

const char* task_name(PretrainTask task) {
    switch (task) {
        case PretrainTask::QueryToSeg: return "query_to_seg";
        case PretrainTask::TextToSeg: return "text_to_seg";
        case PretrainTask::SegToText: return "seg_to_text";
    }
    return "?";
}

FinetuneMode parse_mode(const std::string& name) {
    if (name == "total") {
        return FinetuneMode::Total;
    }
    if (name == "prompt") {
        return FinetuneMode::Prompt;
    }
    throw std::invalid_argument("unknown mode '" + name + "' (expected total or prompt)");
}

const char* mode_name(FinetuneMode mode) { return mode == FinetuneMode::Total ? "total" : "prompt"; }

namespace {

std::vector<TokenId> with_eos(std::vector<TokenId> ids, int64_t max_len) {
    if (static_cast<int64_t>(ids.size()) >= max_len) {
        ids.resize(static_cast<std::size_t>(max_len - 1));
    }
    ids.push_back(Vocabulary::kEos);
    return ids;
}

torch::Tensor stack_masks(const std::vector<Mask>& masks, int64_t pixels) {
    if (masks.empty()) {
        return torch::zeros({0, pixels});
    }
    std::vector<torch::Tensor> rows;
    for (const auto& m : masks) {
        rows.push_back(mask_tensor(m));
    }
    return torch::stack(rows);
}

torch::Tensor batch_images(const std::vector<const DocumentSample*>& samples) {
    std::vector<torch::Tensor> images;
    for (const auto* s : samples) {
        images.push_back(image_to_tensor(s->image));
    }
    return torch::cat(images);
}

}  // namespace

std::vector<TokenId> value_target(const Vocabulary& vocab, const std::string& value, int64_t max_len) {
    return with_eos(vocab.encode(value), max_len);
}

std::vector<TokenId> total_target(const Vocabulary& vocab, const KvTree& tree, int64_t max_len) {
    return with_eos(serialize_total(vocab, tree), max_len);
}

torch::Tensor mask_tensor(const Mask& mask) {
    auto t = torch::empty({static_cast<int64_t>(mask.data.size())}, torch::kFloat);
    float* p = t.data_ptr<float>();
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        p[i] = mask.data[i] ? 1.0f : 0.0f;
    }
    return t;
}

std::vector<PretrainSlot> assemble_pretrain_batch(const std::vector<const DocumentSample*>& samples,
                                                  const ModelConfig& config, const Vocabulary& vocab,
                                                  std::mt19937_64& rng) {
    const int rows = config.pixel_height();
    const int cols = config.pixel_width();
    std::uniform_int_distribution<int> pick_task(0, 2);
    std::vector<PretrainSlot> batch;
    for (const auto* sample : samples) {
        if (sample->regions.empty()) {
            log_warning("skipping sample '" + sample->sample_id +
                        "' for pretraining: it has no text regions");
            continue;
        }
        PretrainSlot slot;
        slot.sample = sample;
        slot.task = static_cast<PretrainTask>(pick_task(rng));
        const auto& img = sample->image;
        switch (slot.task) {
            case PretrainTask::QueryToSeg: {
                const std::size_t keep =
                    std::min(sample->regions.size(), static_cast<std::size_t>(config.num_queries));
                for (std::size_t r = 0; r < keep; ++r) {
                    slot.mask_targets.push_back(
                        sample->regions[r].render_mask(rows, cols, img.height, img.width));
                }
                slot.text_mask = sample->text_mask(rows, cols);
                break;
            }
            case PretrainTask::TextToSeg:
            case PretrainTask::SegToText: {
                std::uniform_int_distribution<int> pick_region(
                    0, static_cast<int>(sample->regions.size()) - 1);
                slot.region = pick_region(rng);
                const auto& region = sample->regions[static_cast<std::size_t>(slot.region)];
                const Mask mask = region.render_mask(rows, cols, img.height, img.width);
                if (slot.task == PretrainTask::TextToSeg) {
                    slot.queries.push_back(QuerySpec::of_text(region.transcript));
                    slot.mask_targets.push_back(mask);
                } else {
                    slot.queries.push_back(QuerySpec::task(kOcrTask));
                    slot.gold_mask = mask;
                    slot.text_target = value_target(vocab, region.transcript, config.max_decode_len);
                }
                break;
            }
        }
        batch.push_back(std::move(slot));
    }
    return batch;
}

Trainer::Trainer(SerumModel model, const TrainConfig& train, std::size_t dataset_size,
                 std::uint64_t seed)
    : model_(std::move(model)), train_(train), dataset_size_(dataset_size), rng_(seed) {
    if (dataset_size_ == 0) {
        throw std::invalid_argument("training needs a non-empty dataset");
    }
    optimizer_ = std::make_unique<torch::optim::Adam>(
        model_->parameters(), torch::optim::AdamOptions(train_.learning_rate));
}

double Trainer::learning_rate() const {
    const double epoch = static_cast<double>(step_) * train_.batch_size /
                         static_cast<double>(dataset_size_);
    const auto decays = static_cast<int>(std::floor(epoch / train_.lr_decay_every_epochs));
    return train_.learning_rate * std::pow(train_.lr_decay_factor, decays);
}

std::vector<std::size_t> Trainer::next_batch() {
    std::vector<std::size_t> batch;
    while (batch.size() < static_cast<std::size_t>(train_.batch_size)) {
        if (cursor_ == order_.size()) {
            order_.resize(dataset_size_);
            std::iota(order_.begin(), order_.end(), 0);
            std::shuffle(order_.begin(), order_.end(), rng_);
            cursor_ = 0;
        }
        batch.push_back(order_[cursor_++]);
    }
    return batch;
}

LossReport Trainer::apply(const torch::Tensor& l_match, const torch::Tensor& l_decoder,
                          const torch::Tensor& l_text, std::vector<double> per_layer) {
    const auto& cfg = model_->config();
    const LossWeights w{cfg.lambda_match, cfg.lambda_decoder, cfg.lambda_text};
    LossReport report;
    report.l_match = l_match.item<double>();
    report.l_decoder = l_decoder.item<double>();
    report.l_text = l_text.item<double>();
    report.l_total = total_loss(report.l_match, report.l_decoder, report.l_text, w);
    report.per_layer_match = std::move(per_layer);
    if (!std::isfinite(report.l_total)) {
        throw NonFiniteLoss("non-finite loss at step " + std::to_string(step_));
    }
    const auto loss = total_loss(l_match, l_decoder, l_text, w);
    optimizer_->zero_grad();
    loss.backward();
    torch::nn::utils::clip_grad_norm_(model_->parameters(), train_.grad_clip_norm);
    for (auto& group : optimizer_->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(learning_rate());
    }
    optimizer_->step();
    ++step_;
    return report;
}

LossReport Trainer::pretrain_step(const std::vector<const DocumentSample*>& batch) {
    model_->train();
    const auto& cfg = model_->config();
    const auto slots = assemble_pretrain_batch(batch, cfg, model_->vocab(), rng_);
    if (slots.empty()) {
        throw std::invalid_argument("pretraining batch has no sample with text regions");
    }
    last_alpha_ = sample_alpha(rng_, true, std::nullopt, cfg);

    std::vector<const DocumentSample*> used;
    std::vector<std::vector<QuerySpec>> queries;
    for (const auto& slot : slots) {
        used.push_back(slot.sample);
        queries.push_back(slot.queries);
    }
    const auto fwd = run_visual(model_, batch_images(used), queries);
    const auto& bundle = fwd.bundle;
    const int64_t pixels = static_cast<int64_t>(cfg.pixel_height()) * cfg.pixel_width();
    const double b = static_cast<double>(slots.size());

    auto l_match = torch::zeros({});
    auto l_text = torch::zeros({});
    auto l_decoder = torch::zeros({});
    std::vector<double> per_layer(bundle.layers(), 0.0);
    std::vector<MergedContext> contexts;
    contexts.reserve(slots.size());
    std::vector<torch::Tensor> query_rows;
    std::vector<std::vector<TokenId>> targets;

    for (std::size_t i = 0; i < slots.size(); ++i) {
        const auto& slot = slots[i];
        const auto bi = static_cast<int64_t>(i);
        if (slot.task == PretrainTask::SegToText) {
            const auto gold = mask_tensor(slot.gold_mask).view({1, cfg.pixel_height(), cfg.pixel_width()});
            const auto scores = pool_scores(gold, torch::ones({1}, torch::kBool), cfg.upsample_factor);
            contexts.push_back(merge_tokens(fwd.features.tokens()[bi], scores, last_alpha_,
                                            model_->merge_value));
            query_rows.push_back(bundle.queries[bi].slice(0, 0, 1));
            targets.push_back(slot.text_target);
            continue;
        }
        std::vector<torch::Tensor> layer_logits;
        for (const auto& logits : bundle.per_layer_score_logits) {
            layer_logits.push_back(logits[bi].flatten(1));
        }
        const auto ml = matching_loss(layer_logits, bundle.class_logits[bi], bundle.validity[bi],
                                      stack_masks(slot.mask_targets, pixels));
        l_match = l_match + ml.total;
        for (std::size_t l = 0; l < ml.per_layer.size(); ++l) {
            per_layer[l] += ml.per_layer[l].item<double>() / b;
        }
        if (slot.task == PretrainTask::QueryToSeg) {
            l_text = l_text + text_constraint_loss(layer_logits.back(), bundle.validity[bi],
                                                   mask_tensor(slot.text_mask));
        }
    }
    if (!targets.empty()) {
        std::vector<const MergedContext*> ptrs;
        for (const auto& c : contexts) {
            ptrs.push_back(&c);
        }
        auto td = model_->text_decoder();
        const auto memory = td.build_memory(ptrs, query_rows);
        l_decoder = td.teacher_forced_nll(memory, targets) * (static_cast<double>(targets.size()) / b);
    }
    return apply(l_match / b, l_decoder, l_text / b, std::move(per_layer));
}

LossReport Trainer::finetune_step(const std::vector<const DocumentSample*>& batch,
                                  FinetuneMode mode) {
    model_->train();
    const auto& cfg = model_->config();
    if (batch.empty()) {
        throw std::invalid_argument("empty fine-tuning batch");
    }
    last_alpha_ = sample_alpha(rng_, true, std::nullopt, cfg);

    std::vector<std::vector<QuerySpec>> queries;
    std::vector<std::vector<std::pair<std::string, std::string>>> fields;
    for (const auto* sample : batch) {
        auto flat = kv_flatten(sample->kv_ground_truth);
        if (flat.size() > static_cast<std::size_t>(cfg.num_queries)) {
            flat.resize(static_cast<std::size_t>(cfg.num_queries));
        }
        std::vector<QuerySpec> specs;
        if (mode == FinetuneMode::Total) {
            specs.push_back(QuerySpec::task(kExtractTask));
        } else {
            if (flat.empty()) {
                throw std::invalid_argument("sample '" + sample->sample_id +
                                            "' has no fields to prompt for");
            }
            for (const auto& [key, value] : flat) {
                specs.push_back(QuerySpec::of_text(key));
            }
        }
        queries.push_back(std::move(specs));
        fields.push_back(std::move(flat));
    }
    const auto fwd = run_visual(model_, batch_images(batch), queries);
    const auto& bundle = fwd.bundle;
    const double b = static_cast<double>(batch.size());

    auto l_text = torch::zeros({});
    std::vector<MergedContext> contexts;
    contexts.reserve(batch.size());
    std::vector<const MergedContext*> ptrs;
    std::vector<torch::Tensor> query_rows;
    std::vector<std::vector<TokenId>> targets;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto bi = static_cast<int64_t>(i);
        contexts.push_back(merge_for(model_, fwd, bi, last_alpha_));
        const auto omega = mask_tensor(batch[i]->text_mask(cfg.pixel_height(), cfg.pixel_width()));
        l_text = l_text + text_constraint_loss(bundle.score_logits[bi].flatten(1), bundle.validity[bi],
                                               omega);
        if (mode == FinetuneMode::Total) {
            ptrs.push_back(&contexts.back());
            query_rows.push_back(bundle.queries[bi].slice(0, 0, 1));
            targets.push_back(total_target(model_->vocab(), batch[i]->kv_ground_truth,
                                           cfg.max_decode_len));
        } else {
            for (std::size_t k = 0; k < fields[i].size(); ++k) {
                const auto ki = static_cast<int64_t>(k);
                ptrs.push_back(&contexts.back());
                query_rows.push_back(bundle.queries[bi].slice(0, ki, ki + 1));
                targets.push_back(value_target(model_->vocab(), fields[i][k].second, cfg.max_decode_len));
            }
        }
    }
    auto td = model_->text_decoder();
    const auto l_decoder = td.teacher_forced_nll(td.build_memory(ptrs, query_rows), targets);
    return apply(torch::zeros({}), l_decoder, l_text / b, {});
}

}  // namespace serum
