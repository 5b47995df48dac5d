#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace serum {

/// Every dimension, count and schedule constant of the model.
///
/// Two presets exist: "toy" (desk-scale, trainable on one CPU core) and
/// "paper-default" (Swin-B sized encoder at 1280x960). Fields are plain
/// values so a config can be overridden field by field from a file or flags.
struct ModelConfig {
    std::string preset = "toy";

    int embed_dim = 128;  // d, also the width of the last encoder stage
    int num_queries = 8;  // N
    int upsample_factor = 6;  // s
    std::vector<int> encoder_stage_depths{2, 2, 2, 2};
    int encoder_window = 4;
    int encoder_head_dim = 16;
    int patch_size = 4;

    int image_height = 256;
    int image_width = 256;
    int image_channels = 3;

    double alpha_min = 0.02;
    double alpha_max = 1.0;

    double lambda_match = 1.0;
    double lambda_decoder = 1.0;
    double lambda_text = 1.0;

    int query_channel = 128;  // C_Q, pinned to embed_dim
    int max_decode_len = 48;
    int decoder_layers = 4;
    int decoder_heads = 4;
    int mlp_ratio = 4;

    // Characters the vocabulary encodes one id each; everything else is UNK.
    std::string charset;

    /// Total spatial reduction of the encoder (patch size times 2 per merge).
    int downsample() const;
    int grid_height() const { return image_height / downsample(); }
    int grid_width() const { return image_width / downsample(); }
    int num_tokens() const { return grid_height() * grid_width(); }
    int pixel_height() const { return upsample_factor * grid_height(); }
    int pixel_width() const { return upsample_factor * grid_width(); }
    int stage_dim(int stage) const;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;

    /// True when two configs describe the same parameter shapes.
    bool same_architecture(const ModelConfig& other) const;

    static ModelConfig toy();
    static ModelConfig paper_default();
    static ModelConfig from_preset(const std::string& name);
};

/// Optimisation settings shared by pretraining and fine-tuning.
struct TrainConfig {
    double learning_rate = 5e-5;
    double lr_decay_factor = 0.1;
    int lr_decay_every_epochs = 30;
    int batch_size = 24;
    double grad_clip_norm = 1.0;
    double alpha_total = 0.5;   // inference keep ratio, total mode
    double alpha_prompt = 0.1;  // inference keep ratio, prompt mode

    static TrainConfig toy();
    static TrainConfig paper_default();
    static TrainConfig from_preset(const std::string& name);
};

std::string default_charset();

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// A config file: {"preset": name, "model": {...}, "train": {...}}.
/// Fields present in the file override the preset's values.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace serum
