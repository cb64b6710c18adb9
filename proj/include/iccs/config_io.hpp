#pragma once

#include <string>

#include "iccs/orchestrator.hpp"

namespace iccs {

// Parses the flat key = value run configuration (keys documented in the
// README; unknown keys are an error). Missing keys keep their defaults.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

std::string config_to_text(const RunConfig& cfg);

}  // namespace iccs
