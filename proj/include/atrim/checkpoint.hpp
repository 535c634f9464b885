#pragma once

#include "atrim/hyper.hpp"
#include "atrim/model.hpp"
#include "atrim/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <memory>
#include <string>

namespace atrim {

/// Strict JSON readers: unknown keys are rejected, known keys fall back to
/// the struct defaults when absent.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainOptions train_options_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
nlohmann::json hyper_to_json(const HyperDict& h);

/// Combined config file: optional "model" and "train" sections.
struct RunConfig {
  ModelConfig model;
  TrainOptions train;
};
RunConfig load_run_config(const std::string& path);

/// Versioned checkpoint holding every named parameter tensor with its shape,
/// the model configuration, and the seed it was built from.
void save_checkpoint(const std::string& path, const Forecaster& model, const ModelConfig& cfg,
                     std::uint64_t seed);

struct LoadedModel {
  std::unique_ptr<Forecaster> model;
  ModelConfig config;
  std::uint64_t seed = 0;
};

/// Rebuilds the model from the embedded config and assigns tensors by name.
/// A missing tensor, an extra tensor, or a shape mismatch is an error.
LoadedModel load_checkpoint(const std::string& path);

}  // namespace atrim
