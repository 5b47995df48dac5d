#include "serum/checkpoint.hpp"

#include <stdexcept>

namespace serum {

namespace {

std::string read_string(torch::serialize::InputArchive& archive, const char* key) {
    c10::IValue value;
    if (!archive.try_read(key, value) || !value.isString()) {
        throw std::runtime_error(std::string("checkpoint is missing '") + key + "'");
    }
    return value.toStringRef();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, SerumModel& model,
                     torch::optim::Optimizer* optimizer, int64_t step) {
    torch::serialize::OutputArchive archive;
    nlohmann::json config;
    to_json(config, model->config());
    archive.write("format_version", c10::IValue(static_cast<int64_t>(kCheckpointVersion)));
    archive.write("config", c10::IValue(config.dump()));
    archive.write("vocabulary", c10::IValue(model->vocab().to_json().dump()));
    archive.write("step", c10::IValue(step));
    torch::serialize::OutputArchive params;
    model->save(params);
    archive.write("model", params);
    archive.write("has_optimizer", c10::IValue(optimizer != nullptr));
    if (optimizer != nullptr) {
        torch::serialize::OutputArchive opt;
        optimizer->save(opt);
        archive.write("optimizer", opt);
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    archive.save_to(path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ModelConfig>& expected) {
    if (!std::filesystem::exists(path)) {
        throw std::runtime_error("checkpoint not found: " + path.string());
    }
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    LoadedCheckpoint out;
    c10::IValue value;
    if (!archive.try_read("format_version", value) || !value.isInt()) {
        throw std::runtime_error(path.string() + " is not a checkpoint");
    }
    out.version = static_cast<int>(value.toInt());
    if (out.version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(out.version));
    }
    ModelConfig config = nlohmann::json::parse(read_string(archive, "config")).get<ModelConfig>();
    if (expected && !expected->same_architecture(config)) {
        throw std::runtime_error("checkpoint " + path.string() +
                                 " was trained with a different model configuration");
    }
    auto vocab = Vocabulary::from_json(nlohmann::json::parse(read_string(archive, "vocabulary")));
    archive.read("step", value);
    out.step = value.toInt();
    out.has_optimizer = archive.try_read("has_optimizer", value) && value.toBool();
    out.model = SerumModel(config, std::move(vocab));
    torch::serialize::InputArchive params;
    archive.read("model", params);
    out.model->load(params);
    return out;
}

bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    c10::IValue value;
    if (!archive.try_read("has_optimizer", value) || !value.toBool()) {
        return false;
    }
    torch::serialize::InputArchive opt;
    archive.read("optimizer", opt);
    optimizer.load(opt);
    return true;
}

}  // namespace serum
