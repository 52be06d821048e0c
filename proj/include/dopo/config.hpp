#pragma once

#include <string>

#include "dopo/experiment.hpp"

namespace dopo {

// Strict JSON -> ExperimentSpec. Unknown keys are rejected with their path;
// a "preset" key expands first and sibling keys override the preset.
ExperimentSpec parse_config(const std::string& text);

// Canonical JSON rendering; parse_config(render_config(s)) == s.
std::string render_config(const ExperimentSpec& spec, int indent = 2);

// Named presets: case-a, case-b, superposition, and -desk variants with
// reduced trajectory counts.
ExperimentSpec preset_spec(const std::string& name);

// Applies a dotted-path override (e.g. "params.gamma_s=0.3") to a config
// JSON document in text form; values are parsed as JSON when possible.
std::string apply_set_override(const std::string& config_text, const std::string& assignment);

} // namespace dopo
