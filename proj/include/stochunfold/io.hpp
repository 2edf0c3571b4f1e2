// JSON config loading with strict key checking: unknown keys are errors, so
// typos fail loudly instead of silently falling back to defaults.
#pragma once

#include <string>

#include <json.hpp>

#include "stochunfold/env.hpp"

namespace stochunfold {

using json = nlohmann::json;

// Throws ConfigError listing the offending key and context.
void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& context);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& value);

EnvironmentSpec parse_env(const json& spec);
EnvironmentSpec load_env(const std::string& path);
json env_to_json(const EnvironmentSpec& env);

}  // namespace stochunfold
