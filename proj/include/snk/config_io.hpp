#pragma once

#include <json.hpp>

#include "snk/optimizer.hpp"

namespace snk {

// Flat JSON mirroring OptimizerConfig.  Missing keys keep their defaults,
// except that inminres/ingmres default to two warm-up gradient steps.
// Unknown keys are rejected.
nlohmann::json config_to_json(const OptimizerConfig& cfg);
OptimizerConfig config_from_json(const nlohmann::json& j);

}  // namespace snk
