#pragma once

#include <filesystem>
#include <optional>

#include <torch/torch.h>

#include "serum/config.hpp"
#include "serum/model.hpp"

namespace serum {

inline constexpr int kCheckpointVersion = 1;

struct LoadedCheckpoint {
    SerumModel model{nullptr};
    int64_t step = 0;
    int version = kCheckpointVersion;
    bool has_optimizer = false;
};

/// Writes parameters, config, vocabulary, optimiser state and step counter.
void save_checkpoint(const std::filesystem::path& path, SerumModel& model,
                     torch::optim::Optimizer* optimizer, int64_t step);

/// Reads a checkpoint. When `expected` is given, a config describing a
/// different architecture is refused with std::runtime_error.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ModelConfig>& expected = std::nullopt);

/// Restores the optimiser state stored with the checkpoint into `optimizer`,
/// which must have been built over the loaded model's parameters. Returns
/// false when the checkpoint carries no optimiser state.
bool load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

}  // namespace serum
