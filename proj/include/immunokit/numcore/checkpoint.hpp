#pragma once

// Checkpoint directory layout:
//   manifest.json   {"format", "step_count", "adam", "metadata", "parameters": [{name, shape, file}]}
//   <name>.f64      value, then m, then v; little-endian IEEE-754 doubles
// `metadata` is free-form JSON owned by the model (architecture and so on).

#include <filesystem>
#include <string_view>

#include <json.hpp>

#include "immunokit/numcore/adam.hpp"
#include "immunokit/numcore/param_store.hpp"

namespace immunokit::nn {

inline constexpr std::string_view kCheckpointFormat = "immunokit.params.v1";

struct Checkpoint {
  ParamStore params;
  AdamConfig adam;
  nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& params,
                     const AdamConfig& adam, const nlohmann::json& metadata);
// Throws ValidationError on a missing file, wrong format tag or size mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace immunokit::nn
