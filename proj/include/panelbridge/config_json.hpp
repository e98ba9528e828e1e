#pragma once

#include <string>

#include "panelbridge/harness.hpp"

namespace panelbridge::config {

// {"type": "factor" | "twfe" | "ar", ...}; see README for the field list.
harness::DgpSpec dgp_spec_from_json_text(const std::string& text);
harness::DgpSpec load_dgp_spec(const std::string& path);

harness::ScenarioConfig scenario_from_json_text(const std::string& text);
harness::ScenarioConfig load_scenario(const std::string& path);

}  // namespace panelbridge::config
