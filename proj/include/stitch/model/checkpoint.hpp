#pragma once

#include <filesystem>

#include "stitch/model/train.hpp"

namespace stitch::model {

// Versioned container: magic, JSON header (config, step, curves, tensor
// table), then the raw parameter doubles in registration order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Builds a model from a checkpoint; forward outputs are bit-identical to
// the saved model's.
Model model_from_checkpoint(const Checkpoint& ckpt);

// Loads parameters into an existing model; throws ConfigError when the
// checkpoint was written under a different ModelConfig.
void restore_into(Model& model, const Checkpoint& ckpt);

}  // namespace stitch::model
