#pragma once

#include <filesystem>
#include <string>

#include "viewssl/nn/model.hpp"

/// Checkpoint directory: meta.json plus one PFT1 f32 tensor per parameter
/// (<param-name>.pft). meta.json records the dense head width and a free-form
/// "info" object (training config, history) that loaders may ignore.
namespace viewssl::nn {

void save_checkpoint(const std::filesystem::path& dir, const ModelParams<float>& params,
                     const std::string& info_json = "{}");

ModelParams<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace viewssl::nn
