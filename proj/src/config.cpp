#include "liatm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace liatm {

namespace {

long parse_integer(const std::string& name, const std::string& value, long lo, long hi) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != value.size() || value.empty() || v < lo || v > hi)
    throw ConfigError(name + " must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "], got '" + value + "'");
  return v;
}

template <typename T>
T field(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

Config config_from_json_text(const std::string& text, Config base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");

  base.data_root = field<std::string>(j, "dataRoot", base.data_root.string());
  base.bind_address = field<std::string>(j, "bind", base.bind_address);
  base.port = field<int>(j, "port", base.port);
  base.token_budget = field<std::size_t>(j, "tokenBudget", base.token_budget);
  base.auto_regenerate = field<bool>(j, "autoRegenerate", base.auto_regenerate);
  if (j.contains("llm")) {
    const auto& llm = j.at("llm");
    if (!llm.is_object()) throw ConfigError("config key 'llm' must be an object");
    base.llm_endpoint = field<std::string>(llm, "endpoint", base.llm_endpoint);
    base.llm_model = field<std::string>(llm, "model", base.llm_model);
    base.llm_token = field<std::string>(llm, "token", base.llm_token);
    base.llm_timeout_seconds = field<int>(llm, "timeoutSeconds", base.llm_timeout_seconds);
  }
  if (base.port < 0 || base.port > 65535) throw ConfigError("port must be in [0, 65535]");
  return base;
}

void apply_env(Config& config, const EnvLookup& env) {
  if (auto v = env("LIATM_DATA_ROOT")) config.data_root = *v;
  if (auto v = env("LIATM_BIND")) config.bind_address = *v;
  if (auto v = env("LIATM_PORT")) config.port = static_cast<int>(parse_integer("LIATM_PORT", *v, 0, 65535));
  if (auto v = env("LIATM_LLM_ENDPOINT")) config.llm_endpoint = *v;
  if (auto v = env("LIATM_LLM_MODEL")) config.llm_model = *v;
  if (auto v = env("LIATM_LLM_TOKEN")) config.llm_token = *v;
  if (auto v = env("LIATM_TOKEN_BUDGET"))
    config.token_budget = static_cast<std::size_t>(parse_integer("LIATM_TOKEN_BUDGET", *v, 1, 100000000));
}

Config load_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
  Config c;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + file->string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    c = config_from_json_text(buf.str(), c);
  }
  apply_env(c, env);
  return c;
}

}  // namespace liatm
