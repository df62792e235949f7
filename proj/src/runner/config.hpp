#pragma once

#include <string>
#include <vector>

#include "harness/session.hpp"
#include "json.hpp"

namespace drift::runner {

struct RunConfig {
  harness::SessionConfig session;
  std::string output_dir = "runs/default";
};

// Parses a YAML (or JSON) run configuration. `overrides` are "dotted.key=value"
// strings applied before validation; DRIFT_SEED, when set, replaces the seed.
// Every problem is reported as ConfigError carrying "<source>:<line>:<col>".
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                       const std::string& source = "config", bool honor_env_seed = true);

// Fully resolved configuration; parsing it again yields the same run.
nlohmann::json to_json(const RunConfig& cfg);
// Canonical text of to_json(cfg) and its FNV-1a hash.
std::string canonical_config(const RunConfig& cfg);
std::uint64_t config_hash(const std::string& canonical);

}  // namespace drift::runner
