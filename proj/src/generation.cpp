#include "liatm/generation.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_url.hpp"

namespace liatm::gen {

std::string_view to_string(Strategy s) {
  return s == Strategy::ChainOfThought ? "chain-of-thought" : "direct";
}

std::optional<Strategy> strategy_from_string(std::string_view s) {
  if (s == "direct") return Strategy::Direct;
  if (s == "chain-of-thought" || s == "cot") return Strategy::ChainOfThought;
  return std::nullopt;
}

std::string_view to_string(Backend b) { return b == Backend::Remote ? "remote" : "offline"; }

std::optional<Backend> backend_from_string(std::string_view s) {
  if (s == "offline") return Backend::Offline;
  if (s == "remote") return Backend::Remote;
  return std::nullopt;
}

namespace {

constexpr std::string_view kSystemPromptTemplate = R"(You are a security architect performing threat modeling of an LLM-integrated application.
The system under review is given as a data-flow diagram in a line-oriented text format.
Identify threats for every component and data flow using STRIDE, the OWASP Top 10 for LLM applications and MITRE ATLAS.
Assess each threat with likelihood and impact on a 1-5 scale and propose mitigations with an estimated riskReduction in percent (0-100).

Respond with a single JSON object and nothing else. The object must follow this schema:
{"otmVersion": "0.2.0-threomolia",
 "project": {"id": string, "name": string},
 "components": [{"id": string, "name": string, "kind": "external_entity"|"process"|"data_store", "tags": [string]}],
 "dataflows": [{"id": string, "source": component id, "target": component id}],
 "threats": [{"id": string, "name": string, "description": string,
              "strideCategories": ["Spoofing"|"Tampering"|"Repudiation"|"InformationDisclosure"|"DenialOfService"|"ElevationOfPrivilege"],
              "owaspLlmId": string (optional), "atlasTechniqueId": string (optional),
              "likelihood": 1-5, "impact": 1-5, "appliesTo": [component or dataflow id]}],
 "mitigations": [{"id": string, "name": string, "description": string, "riskReduction": 0-100, "mitigates": [threat id]}]}
Use the diagram's element and flow ids verbatim. Only use framework ids from this vocabulary:
)";

std::size_t code_points(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(
      s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

}  // namespace

std::string system_prompt(Strategy strategy, const kb::ThreatCatalog& catalog) {
  std::string out(kSystemPromptTemplate);
  for (const auto& o : catalog.owasp) out += "- " + o.id + " " + o.name + "\n";
  for (const auto& t : catalog.techniques) out += "- " + t.id + " " + t.name + "\n";
  if (strategy == Strategy::ChainOfThought) {
    out += "\nBefore answering, ";
    out += kChainOfThoughtInstruction;
    out += ". Keep that reasoning internal and output only the JSON object.\n";
  }
  return out;
}

std::size_t estimate_tokens(std::string_view text) { return (code_points(text) + 3) / 4; }

PromptBundle build_prompt(const dfd::Model& model, const std::string& user_prompt, Strategy strategy,
                          const std::vector<rag::RetrievalResult>& retrieved, std::size_t budget,
                          const kb::ThreatCatalog& catalog) {
  PromptBundle b;
  b.system_prompt = system_prompt(strategy, catalog);
  b.user_prompt = user_prompt;
  b.strategy = strategy;

  ContextBlock dfd_block{kDfdBlockPriority, "dfd", dfd::serialize(model), 0};
  dfd_block.token_estimate = estimate_tokens(dfd_block.text);
  const std::size_t mandatory =
      estimate_tokens(b.system_prompt) + estimate_tokens(b.user_prompt) + dfd_block.token_estimate;
  if (budget < mandatory) throw BudgetTooSmall(mandatory, budget);

  std::vector<ContextBlock> optional_blocks;
  for (const auto& r : retrieved) {
    const int prio = std::min(kMaxRetrievedPriority, 50 + static_cast<int>(std::lround(10.0 * r.score)));
    ContextBlock blk{prio, r.doc_id + "#" + std::to_string(r.seq), r.text, estimate_tokens(r.text)};
    optional_blocks.push_back(std::move(blk));
  }
  std::stable_sort(optional_blocks.begin(), optional_blocks.end(),
                   [](const ContextBlock& x, const ContextBlock& y) { return x.priority > y.priority; });

  std::size_t total = mandatory;
  for (const auto& blk : optional_blocks) total += blk.token_estimate;
  while (total > budget && !optional_blocks.empty()) {
    total -= optional_blocks.back().token_estimate;
    b.dropped_blocks.push_back(optional_blocks.back().label);
    optional_blocks.pop_back();
  }
  std::reverse(b.dropped_blocks.begin(), b.dropped_blocks.end());

  b.included_blocks.push_back(std::move(dfd_block));
  for (auto& blk : optional_blocks) b.included_blocks.push_back(std::move(blk));
  b.total_token_estimate = total;
  return b;
}

std::string render_user_message(const PromptBundle& bundle) {
  std::string out = bundle.user_prompt;
  for (const auto& blk : bundle.included_blocks) {
    out += "\n\n### " + blk.label + "\n" + blk.text;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Offline backend

std::string offline_threat_id(const kb::IdentifiedThreat& t) { return t.rule_id + ":" + t.subject_key(); }

std::string_view rule_of_threat_id(std::string_view threat_id) {
  return threat_id.substr(0, threat_id.find(':'));
}

std::string project_id_for(std::string_view system_name) {
  std::string out;
  for (unsigned char c : system_name) {
    if (std::isalnum(c)) {
      out += static_cast<char>(std::tolower(c));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "project" : out;
}

otm::Document offline_document(const dfd::Model& model, const kb::ThreatCatalog& catalog) {
  otm::Document doc;
  doc.project = {project_id_for(model.system_name()), model.system_name()};
  for (const auto& e : model.elements()) {
    doc.components.push_back({e.id, e.name, std::string(dfd::to_keyword(e.kind)),
                              std::vector<std::string>(e.tags.begin(), e.tags.end())});
  }
  for (const auto& f : model.flows()) doc.dataflows.push_back({f.id, f.source, f.target});

  std::map<std::string, std::vector<std::string>> by_rule;
  for (const auto& t : kb::identify_threats(model, catalog)) {
    const kb::Rule* rule = catalog.find_rule(t.rule_id);
    otm::Threat ot;
    ot.id = offline_threat_id(t);
    ot.name = t.title;
    ot.description = rule ? rule->description : "";
    ot.stride = t.stride;
    ot.owasp_id = t.owasp_id;
    ot.atlas_id = t.atlas_id;
    ot.likelihood = t.likelihood;
    ot.impact = t.impact;
    ot.applies_to = t.subject_ids;
    if (rule && rule->llm_specific) by_rule[t.rule_id].push_back(ot.id);
    doc.threats.push_back(std::move(ot));
  }
  for (auto& [rule_id, threat_ids] : by_rule) {
    const auto* m = catalog.mitigation_for_rule(rule_id);
    if (!m) continue;
    doc.mitigations.push_back({m->id, m->name, m->description, m->risk_reduction, std::move(threat_ids)});
  }
  return otm::canonicalize(std::move(doc));
}

GenerationResult generate_offline(const dfd::Model& model, const kb::ThreatCatalog& catalog) {
  const auto start = std::chrono::steady_clock::now();
  GenerationResult r;
  r.backend = Backend::Offline;
  r.document = offline_document(model, catalog);
  r.raw_text = otm::serialize(*r.document);
  r.elapsed_millis = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return r;
}

// ---------------------------------------------------------------------------
// Remote backend

std::optional<std::string> extract_first_json_object(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          std::string candidate(text.substr(start, i - start + 1));
          if (nlohmann::json::accept(candidate)) return candidate;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

GenerationResult interpret_remote_output(std::string raw_text) {
  GenerationResult r;
  r.backend = Backend::Remote;
  r.raw_text = std::move(raw_text);
  auto json = extract_first_json_object(r.raw_text);
  if (!json) {
    r.parse_diagnostics.push_back({"$", "no JSON object found in model output"});
    return r;
  }
  try {
    r.document = otm::parse(*json);
  } catch (const otm::OtmValidationError& e) {
    r.parse_diagnostics = e.diagnostics();
  } catch (const otm::OtmParseError& e) {
    r.parse_diagnostics.push_back({"$", e.what()});
  }
  return r;
}

GenerationResult generate_remote(const PromptBundle& bundle, const RemoteLlmConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  detail::SplitUrl url;
  try {
    url = detail::split_url(config.endpoint);
  } catch (const std::invalid_argument& e) {
    throw RemoteLlmError(e.what());
  }

  const nlohmann::json request = {
      {"model", config.model},
      {"messages",
       {{{"role", "system"}, {"content", bundle.system_prompt}},
        {{"role", "user"}, {"content", render_user_message(bundle)}}}},
      {"temperature", 0},
  };
  const std::string body = request.dump();

  std::string last_error;
  auto delay = config.retry.initial_delay;
  for (int attempt = 1; attempt <= std::max(1, config.retry.attempts); ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client client(url.origin);
    client.set_connection_timeout(config.timeout_seconds);
    client.set_read_timeout(config.timeout_seconds);
    if (!config.auth_token.empty()) client.set_bearer_token_auth(config.auth_token);

    auto res = client.Post(url.path, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw RemoteLlmError("LLM endpoint returned HTTP " + std::to_string(res->status));

    std::string content;
    try {
      auto j = nlohmann::json::parse(res->body);
      content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw RemoteLlmError(std::string("malformed chat-completions response: ") + e.what());
    }
    GenerationResult r = interpret_remote_output(std::move(content));
    r.elapsed_millis = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
    return r;
  }
  throw RemoteLlmError("LLM request failed after " + std::to_string(config.retry.attempts) +
                       " attempts: " + last_error);
}

}  // namespace liatm::gen
