#pragma once

#include <filesystem>

#include "tqf/model/model.hpp"

namespace tqf::model {

/// One `.ten` file per parameter (named after the parameter) plus
/// manifest.json with the config, seed, step count, parameter list and the
/// vocabulary slots. Contains nothing time-dependent.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, Model<T>& model, std::size_t steps);

struct CheckpointInfo {
  RunConfig config;
  std::size_t steps = 0;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Loads parameters and vocabulary into a model built from the manifest
/// config. Missing or mis-shaped parameters are a ValidationError.
template <typename T>
void load_checkpoint(const std::filesystem::path& dir, Model<T>& model);

}  // namespace tqf::model
