#pragma once

// Prompt assembly under a token budget and the two generation backends:
// a deterministic offline backend rendering the rule engine, and a remote
// chat-completions backend.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "liatm/dfd.hpp"
#include "liatm/otm.hpp"
#include "liatm/rag.hpp"
#include "liatm/threat_kb.hpp"

namespace liatm::gen {

enum class Strategy { Direct, ChainOfThought };

std::string_view to_string(Strategy s);
// Accepts "direct", "chain-of-thought" and "cot".
std::optional<Strategy> strategy_from_string(std::string_view s);

inline constexpr std::string_view kSystemPromptVersion = "tm-system-v1";
inline constexpr std::string_view kChainOfThoughtInstruction =
    "reason step by step about each component and flow before listing threats";

std::string system_prompt(Strategy strategy, const kb::ThreatCatalog& catalog = kb::builtin_catalog());

// ceil(code points / 4)
std::size_t estimate_tokens(std::string_view text);

inline constexpr int kDfdBlockPriority = 100;
inline constexpr int kMaxRetrievedPriority = 90;

struct ContextBlock {
  int priority = 0;
  std::string label;
  std::string text;
  std::size_t token_estimate = 0;
};

struct PromptBundle {
  std::string system_prompt;
  std::string user_prompt;
  Strategy strategy = Strategy::Direct;
  std::vector<ContextBlock> included_blocks;
  std::vector<std::string> dropped_blocks;
  std::size_t total_token_estimate = 0;
};

class BudgetTooSmall : public std::runtime_error {
 public:
  BudgetTooSmall(std::size_t required, std::size_t budget)
      : std::runtime_error("token budget " + std::to_string(budget) +
                           " is below the mandatory prompt size " + std::to_string(required)),
        required_(required),
        budget_(budget) {}
  [[nodiscard]] std::size_t required() const { return required_; }
  [[nodiscard]] std::size_t budget() const { return budget_; }

 private:
  std::size_t required_;
  std::size_t budget_;
};

// Retrieved chunks get priority min(90, 50 + round(10 * score)); whole blocks
// are dropped from the lowest priority (latest inserted first among equals)
// until the estimate fits. The system prompt, user prompt and DFD block are
// never dropped.
PromptBundle build_prompt(const dfd::Model& model, const std::string& user_prompt,
                          Strategy strategy, const std::vector<rag::RetrievalResult>& retrieved,
                          std::size_t budget, const kb::ThreatCatalog& catalog = kb::builtin_catalog());

// The user message sent to the remote model: the user prompt followed by each
// included block under a "### <label>" heading.
std::string render_user_message(const PromptBundle& bundle);

enum class Backend { Offline, Remote };
std::string_view to_string(Backend b);
std::optional<Backend> backend_from_string(std::string_view s);

struct GenerationResult {
  Backend backend = Backend::Offline;
  std::string raw_text;
  std::optional<otm::Document> document;
  std::vector<otm::Diagnostic> parse_diagnostics;
  std::int64_t elapsed_millis = 0;
};

// Threat id used by the offline backend: "<rule id>:<subject ids joined by +>".
std::string offline_threat_id(const kb::IdentifiedThreat& t);
// Rule part of an offline threat id (text before the first ':').
std::string_view rule_of_threat_id(std::string_view threat_id);
std::string project_id_for(std::string_view system_name);

otm::Document offline_document(const dfd::Model& model,
                               const kb::ThreatCatalog& catalog = kb::builtin_catalog());
GenerationResult generate_offline(const dfd::Model& model,
                                  const kb::ThreatCatalog& catalog = kb::builtin_catalog());

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_delay{1000};  // doubled after every failed attempt
};

struct RemoteLlmConfig {
  std::string endpoint;  // full URL of the chat-completions endpoint
  std::string model;
  std::string auth_token;
  int timeout_seconds = 120;
  RetryPolicy retry;
};

class RemoteLlmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// First balanced top-level {...} in `text`, honoring JSON string escapes.
std::optional<std::string> extract_first_json_object(std::string_view text);

// Throws RemoteLlmError after exhausting retries on transport errors, HTTP
// 429 and 5xx; other non-200 statuses and malformed envelopes fail at once.
// A reply whose content is not a valid threat model is returned with
// `document` empty and the reasons in parse_diagnostics.
GenerationResult generate_remote(const PromptBundle& bundle, const RemoteLlmConfig& config);

// Interprets raw model output the same way generate_remote does.
GenerationResult interpret_remote_output(std::string raw_text);

}  // namespace liatm::gen
