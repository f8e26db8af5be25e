#pragma once

// Service and CLI configuration: a JSON file overlaid by LIATM_* environment
// variables.
//
//   {"dataRoot": "...", "bind": "127.0.0.1", "port": 8080,
//    "llm": {"endpoint": "...", "model": "...", "token": "...", "timeoutSeconds": 120},
//    "tokenBudget": 8000, "autoRegenerate": true}
//
// Environment: LIATM_DATA_ROOT, LIATM_BIND, LIATM_PORT, LIATM_LLM_ENDPOINT,
// LIATM_LLM_MODEL, LIATM_LLM_TOKEN, LIATM_TOKEN_BUDGET.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace liatm {

struct Config {
  std::filesystem::path data_root = "liatm-data";
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::string llm_endpoint;
  std::string llm_model = "gpt-4";
  std::string llm_token;
  int llm_timeout_seconds = 120;
  std::size_t token_budget = 8000;
  bool auto_regenerate = true;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

Config config_from_json_text(const std::string& text, Config base = {});
void apply_env(Config& config, const EnvLookup& env);

// Defaults, then `file` when given, then the environment.
Config load_config(const std::optional<std::filesystem::path>& file,
                   const EnvLookup& env = process_env);

}  // namespace liatm
