#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "serum/config.hpp"
#include "serum/document.hpp"
#include "serum/losses.hpp"
#include "serum/model.hpp"

namespace serum {

enum class PretrainTask { QueryToSeg, TextToSeg, SegToText };

const char* task_name(PretrainTask task);

/// One batch slot of mixed-task pretraining.
struct PretrainSlot {
    PretrainTask task = PretrainTask::QueryToSeg;
    const DocumentSample* sample = nullptr;
    std::vector<QuerySpec> queries;
    std::vector<Mask> mask_targets;     // at (s*h, s*w)
    Mask text_mask;                     // union of all regions, query->seg only
    Mask gold_mask;                     // seg->text only
    std::vector<TokenId> text_target;  // seg->text only, ends with EOS
    int region = -1;
};

/// Draws a task per sample uniformly. Samples without regions are skipped
/// with a warning. Query->seg keeps at most N region masks.
std::vector<PretrainSlot> assemble_pretrain_batch(const std::vector<const DocumentSample*>& samples,
                                                  const ModelConfig& config, const Vocabulary& vocab,
                                                  std::mt19937_64& rng);

enum class FinetuneMode { Total, Prompt };

FinetuneMode parse_mode(const std::string& name);
const char* mode_name(FinetuneMode mode);

/// Decode target of a prompt-mode key stream or a total-mode sequence, EOS
/// appended and truncated to fit max_decode_len.
std::vector<TokenId> value_target(const Vocabulary& vocab, const std::string& value, int64_t max_len);
std::vector<TokenId> total_target(const Vocabulary& vocab, const KvTree& tree, int64_t max_len);

/// Binary mask as a flat float tensor.
torch::Tensor mask_tensor(const Mask& mask);

/// Adam with gradient clipping and epoch-based step decay.
class Trainer {
public:
    Trainer(SerumModel model, const TrainConfig& train, std::size_t dataset_size,
            std::uint64_t seed);

    LossReport pretrain_step(const std::vector<const DocumentSample*>& batch);
    LossReport finetune_step(const std::vector<const DocumentSample*>& batch, FinetuneMode mode);

    /// Next batch of dataset indices; reshuffles at each epoch boundary.
    std::vector<std::size_t> next_batch();

    double learning_rate() const;
    int64_t step() const { return step_; }
    void set_step(int64_t step) { step_ = step; }
    double last_alpha() const { return last_alpha_; }

    SerumModel& model() { return model_; }
    torch::optim::Adam& optimizer() { return *optimizer_; }

private:
    LossReport apply(const torch::Tensor& l_match, const torch::Tensor& l_decoder,
                     const torch::Tensor& l_text, std::vector<double> per_layer);

    SerumModel model_;
    TrainConfig train_;
    std::size_t dataset_size_;
    std::mt19937_64 rng_;
    std::unique_ptr<torch::optim::Adam> optimizer_;
    int64_t step_ = 0;
    double last_alpha_ = 1.0;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace serum
