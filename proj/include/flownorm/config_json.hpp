#pragma once

#include <json.hpp>

#include "flownorm/bench.hpp"

namespace flownorm {

// Reports embed the fully-resolved configuration next to the results, so
// a report file alone is enough to reproduce the run.
nlohmann::json config_to_json(const FlowNormParams& p);
nlohmann::json config_to_json(const SolverConfig& c);
nlohmann::json config_to_json(const FlowProviderConfig& p);
nlohmann::json config_to_json(const AlignerConfig& a);
nlohmann::json config_to_json(const SuccessThresholds& t);
nlohmann::json config_to_json(const BasinTrialSpec& s);
nlohmann::json config_to_json(const SkipTrialSpec& s);

}  // namespace flownorm
