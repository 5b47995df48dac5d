#include "serum/config.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace serum {

namespace {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) {
        out = it->get<T>();
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) {
        throw std::invalid_argument("invalid config: " + what);
    }
}

}  // namespace

std::string default_charset() {
    std::string chars;
    for (char c = ' '; c <= '~'; ++c) {
        chars.push_back(c);
    }
    return chars;
}

int ModelConfig::downsample() const {
    const int merges = static_cast<int>(encoder_stage_depths.size()) - 1;
    return patch_size * (1 << std::max(merges, 0));
}

int ModelConfig::stage_dim(int stage) const {
    const int stages = static_cast<int>(encoder_stage_depths.size());
    return embed_dim >> (stages - 1 - stage);
}

void ModelConfig::validate() const {
    require(embed_dim > 0, "embed_dim must be positive");
    require(num_queries > 0, "num_queries must be positive");
    require(upsample_factor > 0, "upsample_factor must be positive");
    require(!encoder_stage_depths.empty(), "encoder_stage_depths is empty");
    for (int depth : encoder_stage_depths) {
        require(depth > 0, "encoder stage depths must be positive");
    }
    require(encoder_window > 0, "encoder_window must be positive");
    require(patch_size > 0, "patch_size must be positive");
    require(image_height > 0 && image_width > 0 && image_channels > 0,
            "image dimensions must be positive");
    require(image_height % downsample() == 0 && image_width % downsample() == 0,
            "image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                " is not divisible by the encoder downsample " + std::to_string(downsample()));
    const int stages = static_cast<int>(encoder_stage_depths.size());
    require(embed_dim % (1 << (stages - 1)) == 0,
            "embed_dim must be divisible by 2^(stages-1)");
    require(encoder_head_dim > 0 && stage_dim(0) % encoder_head_dim == 0,
            "encoder_head_dim must divide the first stage width");
    for (int s = 0; s < stages; ++s) {
        const int gh = image_height / (patch_size << s);
        const int gw = image_width / (patch_size << s);
        const int win_h = std::min(encoder_window, gh);
        const int win_w = std::min(encoder_window, gw);
        require(gh % win_h == 0 && gw % win_w == 0,
                "window " + std::to_string(encoder_window) + " does not tile stage " +
                    std::to_string(s) + " grid " + std::to_string(gh) + "x" + std::to_string(gw));
    }
    require(alpha_min > 0.0 && alpha_min <= alpha_max && alpha_max <= 1.0,
            "need 0 < alpha_min <= alpha_max <= 1");
    require(lambda_match >= 0.0 && lambda_decoder >= 0.0 && lambda_text >= 0.0,
            "loss weights must be nonnegative");
    require(query_channel == embed_dim, "query_channel must equal embed_dim");
    require(max_decode_len > 0, "max_decode_len must be positive");
    require(decoder_layers > 0, "decoder_layers must be positive");
    require(decoder_heads > 0 && embed_dim % decoder_heads == 0,
            "decoder_heads must divide embed_dim");
    require(mlp_ratio > 0, "mlp_ratio must be positive");
    require(!charset.empty(), "charset is empty");
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
    return embed_dim == o.embed_dim && num_queries == o.num_queries &&
           upsample_factor == o.upsample_factor &&
           encoder_stage_depths == o.encoder_stage_depths && encoder_window == o.encoder_window &&
           encoder_head_dim == o.encoder_head_dim && patch_size == o.patch_size &&
           image_height == o.image_height && image_width == o.image_width &&
           image_channels == o.image_channels && query_channel == o.query_channel &&
           max_decode_len == o.max_decode_len && decoder_layers == o.decoder_layers &&
           decoder_heads == o.decoder_heads && mlp_ratio == o.mlp_ratio && charset == o.charset;
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.preset = "toy";
    c.charset = default_charset();
    return c;
}

ModelConfig ModelConfig::paper_default() {
    ModelConfig c;
    c.preset = "paper-default";
    c.embed_dim = 1024;  // Swin-B: 128 * 2^3
    c.num_queries = 50;
    c.upsample_factor = 6;
    c.encoder_stage_depths = {2, 2, 14, 2};
    c.encoder_window = 10;
    c.encoder_head_dim = 32;
    c.image_height = 1280;
    c.image_width = 960;
    c.query_channel = 1024;
    c.max_decode_len = 256;
    c.decoder_layers = 4;
    c.decoder_heads = 16;
    c.charset = default_charset();
    return c;
}

ModelConfig ModelConfig::from_preset(const std::string& name) {
    if (name == "toy") {
        return toy();
    }
    if (name == "paper-default") {
        return paper_default();
    }
    throw std::invalid_argument("unknown preset '" + name + "'");
}

TrainConfig TrainConfig::toy() {
    TrainConfig t;
    t.learning_rate = 1e-3;
    t.lr_decay_every_epochs = 100;
    t.batch_size = 4;
    return t;
}

TrainConfig TrainConfig::paper_default() { return TrainConfig{}; }

TrainConfig TrainConfig::from_preset(const std::string& name) {
    if (name == "toy") {
        return toy();
    }
    if (name == "paper-default") {
        return paper_default();
    }
    throw std::invalid_argument("unknown preset '" + name + "'");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"preset", c.preset},
                       {"embed_dim", c.embed_dim},
                       {"num_queries", c.num_queries},
                       {"upsample_factor", c.upsample_factor},
                       {"encoder_stage_depths", c.encoder_stage_depths},
                       {"encoder_window", c.encoder_window},
                       {"encoder_head_dim", c.encoder_head_dim},
                       {"patch_size", c.patch_size},
                       {"image_height", c.image_height},
                       {"image_width", c.image_width},
                       {"image_channels", c.image_channels},
                       {"alpha_min", c.alpha_min},
                       {"alpha_max", c.alpha_max},
                       {"lambda_match", c.lambda_match},
                       {"lambda_decoder", c.lambda_decoder},
                       {"lambda_text", c.lambda_text},
                       {"query_channel", c.query_channel},
                       {"max_decode_len", c.max_decode_len},
                       {"decoder_layers", c.decoder_layers},
                       {"decoder_heads", c.decoder_heads},
                       {"mlp_ratio", c.mlp_ratio},
                       {"charset", c.charset}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    read_if(j, "preset", c.preset);
    read_if(j, "embed_dim", c.embed_dim);
    read_if(j, "num_queries", c.num_queries);
    read_if(j, "upsample_factor", c.upsample_factor);
    read_if(j, "encoder_stage_depths", c.encoder_stage_depths);
    read_if(j, "encoder_window", c.encoder_window);
    read_if(j, "encoder_head_dim", c.encoder_head_dim);
    read_if(j, "patch_size", c.patch_size);
    read_if(j, "image_height", c.image_height);
    read_if(j, "image_width", c.image_width);
    read_if(j, "image_channels", c.image_channels);
    read_if(j, "alpha_min", c.alpha_min);
    read_if(j, "alpha_max", c.alpha_max);
    read_if(j, "lambda_match", c.lambda_match);
    read_if(j, "lambda_decoder", c.lambda_decoder);
    read_if(j, "lambda_text", c.lambda_text);
    read_if(j, "query_channel", c.query_channel);
    read_if(j, "max_decode_len", c.max_decode_len);
    read_if(j, "decoder_layers", c.decoder_layers);
    read_if(j, "decoder_heads", c.decoder_heads);
    read_if(j, "mlp_ratio", c.mlp_ratio);
    read_if(j, "charset", c.charset);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate},
                       {"lr_decay_factor", c.lr_decay_factor},
                       {"lr_decay_every_epochs", c.lr_decay_every_epochs},
                       {"batch_size", c.batch_size},
                       {"grad_clip_norm", c.grad_clip_norm},
                       {"alpha_total", c.alpha_total},
                       {"alpha_prompt", c.alpha_prompt}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    read_if(j, "learning_rate", c.learning_rate);
    read_if(j, "lr_decay_factor", c.lr_decay_factor);
    read_if(j, "lr_decay_every_epochs", c.lr_decay_every_epochs);
    read_if(j, "batch_size", c.batch_size);
    read_if(j, "grad_clip_norm", c.grad_clip_norm);
    read_if(j, "alpha_total", c.alpha_total);
    read_if(j, "alpha_prompt", c.alpha_prompt);
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    const std::string preset = j.value("preset", std::string("toy"));
    RunConfig rc{ModelConfig::from_preset(preset), TrainConfig::from_preset(preset)};
    if (auto it = j.find("model"); it != j.end()) {
        from_json(*it, rc.model);
    }
    if (auto it = j.find("train"); it != j.end()) {
        from_json(*it, rc.train);
    }
    rc.model.validate();
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("config file " + path + ": " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace serum
