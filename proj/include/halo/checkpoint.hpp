#pragma once

#include <string>

#include "halo/model.hpp"

namespace halo {

// Binary checkpoint: format-version header, the model configuration, then
// every learnable tensor by name. Loading rebuilds the Model wholesale;
// loading into a differently-shaped config is a descriptive error.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace halo
