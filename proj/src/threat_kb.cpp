#include "liatm/threat_kb.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

namespace liatm::kb {

using dfd::ElementKind;

std::string_view to_string(Stride s) {
  switch (s) {
    case Stride::Spoofing: return "Spoofing";
    case Stride::Tampering: return "Tampering";
    case Stride::Repudiation: return "Repudiation";
    case Stride::InformationDisclosure: return "InformationDisclosure";
    case Stride::DenialOfService: return "DenialOfService";
    case Stride::ElevationOfPrivilege: return "ElevationOfPrivilege";
  }
  return "Spoofing";
}

std::optional<Stride> stride_from_string(std::string_view s) {
  for (Stride c : kAllStride)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

StrideSet stride_per_element(ElementKind kind) {
  switch (kind) {
    case ElementKind::ExternalEntity:
      return {Stride::Spoofing, Stride::Repudiation};
    case ElementKind::Process:
      return {kAllStride, kAllStride + 6};
    case ElementKind::DataStore:
      return {Stride::Tampering, Stride::Repudiation, Stride::InformationDisclosure,
              Stride::DenialOfService};
  }
  return {};
}

StrideSet stride_per_flow() {
  return {Stride::Tampering, Stride::InformationDisclosure, Stride::DenialOfService};
}

// ---------------------------------------------------------------------------
// Catalog lookups

namespace {
template <typename T>
const T* find_by_id(const std::vector<T>& items, std::string_view id) {
  for (const auto& item : items)
    if (item.id == id) return &item;
  return nullptr;
}
}  // namespace

const OwaspEntry* ThreatCatalog::find_owasp(std::string_view id) const { return find_by_id(owasp, id); }
const AtlasTactic* ThreatCatalog::find_tactic(std::string_view id) const { return find_by_id(tactics, id); }
const AtlasTechnique* ThreatCatalog::find_technique(std::string_view id) const {
  return find_by_id(techniques, id);
}
const Rule* ThreatCatalog::find_rule(std::string_view id) const { return find_by_id(rules, id); }

const MitigationTemplate* ThreatCatalog::mitigation_for_rule(std::string_view rule_id) const {
  for (const auto& m : mitigations)
    if (m.rule_id == rule_id) return &m;
  return nullptr;
}

std::optional<std::string> ThreatCatalog::map_atlas_to_owasp(std::string_view technique_id) const {
  const auto* t = find_technique(technique_id);
  if (!t) throw UnknownTechnique(std::string(technique_id));
  return t->owasp_id;
}

std::optional<std::string> map_atlas_to_owasp(std::string_view technique_id) {
  return builtin_catalog().map_atlas_to_owasp(technique_id);
}

// ---------------------------------------------------------------------------
// Built-in data

namespace {

ThreatCatalog make_builtin() {
  ThreatCatalog c;
  c.owasp = {
      {"LLM01", "Prompt Injection",
       "Crafted input makes the model ignore its instructions or act on attacker intent."},
      {"LLM02", "Insecure Output Handling",
       "Model output is passed to downstream components without validation or encoding."},
      {"LLM03", "Training Data Poisoning",
       "Manipulated training or fine-tuning data alters model behavior."},
      {"LLM04", "Model Denial of Service",
       "Resource-heavy inputs degrade availability and raise operating cost."},
      {"LLM05", "Supply Chain Vulnerabilities",
       "Compromised third-party models, datasets, or packages reach the application."},
      {"LLM06", "Sensitive Information Disclosure",
       "The model reveals confidential data present in its context or training set."},
      {"LLM07", "Insecure Plugin Design",
       "Plugins accept unvalidated model-generated input or run with excessive scope."},
      {"LLM08", "Excessive Agency",
       "The model can trigger privileged actions beyond what the task requires."},
      {"LLM09", "Overreliance",
       "Users or systems act on model output without verification."},
      {"LLM10", "Model Theft",
       "Proprietary model weights or artifacts are exfiltrated."},
  };

  c.tactics = {
      {"AML.TA0004", "Initial Access"},   {"AML.TA0005", "Execution"},
      {"AML.TA0006", "Persistence"},      {"AML.TA0007", "Defense Evasion"},
      {"AML.TA0008", "Discovery"},        {"AML.TA0010", "Exfiltration"},
      {"AML.TA0012", "Privilege Escalation"},
  };

  c.techniques = {
      {"AML.T0051", "LLM Prompt Injection (direct and indirect)",
       {"AML.TA0004", "AML.TA0006", "AML.TA0007", "AML.TA0012"}, "LLM01", std::nullopt,
       "Adversary-controlled input reaches the model directly or through retrieved content."},
      {"AML.T0061", "LLM Prompt Self-Replication", {"AML.TA0006"}, std::nullopt, std::nullopt,
       "A prompt causes the model to reproduce it in output that is later fed back as input."},
      {"AML.T0054", "LLM Jailbreak", {"AML.TA0007", "AML.TA0012"}, std::nullopt, std::nullopt,
       "Input designed to bypass guardrails placed on the model."},
      {"AML.T0056", "LLM Meta Prompt Extraction", {"AML.TA0008", "AML.TA0010"}, "LLM02",
       std::nullopt, "Adversary extracts the system prompt through model output."},
      {"AML.T0062", "Discover LLM Hallucination", {"AML.TA0008"}, std::nullopt, std::nullopt,
       "Adversary probes for hallucinated entities that can be squatted or abused."},
      {std::string(kPluginCompromiseId), "LLM Plugin Compromise", {"AML.TA0012", "AML.TA0005"},
       "LLM07", "AML.T0062",
       "Adversary drives the model to invoke plugins with attacker-chosen arguments."},
      {"AML.T0057", "LLM Data Leakage", {"AML.TA0010"}, "LLM06", std::nullopt,
       "The model leaks sensitive data it has access to."},
  };

  const auto S = Stride::Spoofing, T = Stride::Tampering, R = Stride::Repudiation,
             I = Stride::InformationDisclosure, D = Stride::DenialOfService,
             E = Stride::ElevationOfPrivilege;

  auto stride_rule = [](std::string_view id, Stride s, std::string title) {
    Rule r;
    r.id = id;
    r.title = std::move(title);
    r.description = "STRIDE-per-element: " + std::string(to_string(s)) +
                    " applies to this element or flow type.";
    r.subject_kind = SubjectKind::Element;
    r.stride = {s};
    r.likelihood = 2;
    r.impact = 3;
    return r;
  };
  auto llm_rule = [](std::string_view id, SubjectKind kind, std::string title,
                     std::string description, StrideSet stride,
                     std::optional<std::string> owasp, std::optional<std::string> atlas) {
    Rule r;
    r.id = id;
    r.title = std::move(title);
    r.description = std::move(description);
    r.subject_kind = kind;
    r.stride = std::move(stride);
    r.owasp_id = std::move(owasp);
    r.atlas_id = std::move(atlas);
    r.likelihood = 4;
    r.impact = 4;
    r.llm_specific = true;
    return r;
  };

  c.rules = {
      stride_rule(rule::kStrideS, S, "Spoofing"),
      stride_rule(rule::kStrideT, T, "Tampering"),
      stride_rule(rule::kStrideR, R, "Repudiation"),
      stride_rule(rule::kStrideI, I, "Information disclosure"),
      stride_rule(rule::kStrideD, D, "Denial of service"),
      stride_rule(rule::kStrideE, E, "Elevation of privilege"),
      llm_rule(rule::kPromptInjectionDirect, SubjectKind::Flow, "Direct prompt injection",
               "An external entity sends input straight into an LLM component.", {T, E},
               "LLM01", "AML.T0051"),
      llm_rule(rule::kPromptInjectionIndirect, SubjectKind::Element, "Indirect prompt injection",
               "Input originating at an external entity reaches the LLM through at least one "
               "intermediate hop.",
               {T, E}, "LLM01", "AML.T0051"),
      llm_rule(rule::kJailbreak, SubjectKind::Element, "LLM jailbreak",
               "An LLM protected by guardrails receives externally influenced input.", {E},
               std::nullopt, "AML.T0054"),
      llm_rule(rule::kSelfReplication, SubjectKind::Cycle, "Prompt self-replication",
               "LLM output can flow back into its own input through a cycle of data flows.", {T},
               std::nullopt, "AML.T0061"),
      llm_rule(rule::kTrainingDataPoisoning, SubjectKind::Flow, "Training data poisoning",
               "A training data store feeds the LLM; manipulated records change its behavior.",
               {T}, "LLM03", std::nullopt),
      llm_rule(rule::kInsecureOutput, SubjectKind::Flow, "Insecure output handling",
               "LLM output flows into a process that does not sanitize it; the output may also "
               "carry the extracted system prompt.",
               {T, I}, "LLM02", "AML.T0056"),
      llm_rule(rule::kSensitiveDisclosure, SubjectKind::Element, "Sensitive information disclosure",
               "The LLM reads from a sensitive data store and emits output.", {I}, "LLM06",
               "AML.T0057"),
      llm_rule(rule::kModelDos, SubjectKind::Element, "Model denial of service",
               "Externally reachable LLM can be driven into excessive latency or cost.", {D},
               "LLM04", std::nullopt),
      llm_rule(rule::kSupplyChain, SubjectKind::Element, "Supply chain vulnerabilities",
               "Third-party models, datasets and packages behind the LLM component.", {T},
               "LLM05", std::nullopt),
      llm_rule(rule::kExcessiveAgency, SubjectKind::Flow, "Excessive agency",
               "LLM output drives a privileged component.", {E}, "LLM08", std::nullopt),
      llm_rule(rule::kPluginDesign, SubjectKind::Flow, "Insecure plugin design",
               "LLM output invokes a plugin with model-chosen arguments.", {T, E}, "LLM07",
               std::string(kPluginCompromiseId)),
      llm_rule(rule::kOverreliance, SubjectKind::Element, "Overreliance",
               "Consumers may act on LLM output without verification.", {T}, "LLM09",
               std::nullopt),
      llm_rule(rule::kModelTheft, SubjectKind::Flow, "Model theft",
               "Model artifacts leave their store across a trust boundary.", {I}, "LLM10",
               std::nullopt),
  };
  // Informational entries without a structural trigger.
  for (auto& r : c.rules) {
    if (r.id == rule::kSupplyChain || r.id == rule::kOverreliance) {
      r.likelihood = 2;
      r.impact = 3;
    }
  }

  c.mitigations = {
      {"M-LLM01-direct", std::string(rule::kPromptInjectionDirect), "Input filtering and prompt isolation",
       "Screen external input and keep it separated from instructions in the prompt.", 50},
      {"M-LLM01-indirect", std::string(rule::kPromptInjectionIndirect),
       "Untrusted content segregation",
       "Mark content relayed from upstream components as data and strip embedded instructions.",
       40},
      {"M-JAILBREAK", std::string(rule::kJailbreak), "Guardrail hardening",
       "Layer input and output classifiers over the guardrails and evaluate them adversarially.",
       40},
      {"M-SELFREP", std::string(rule::kSelfReplication), "Feedback loop validation",
       "Validate model output before it is stored or resubmitted as model input.", 50},
      {"M-LLM03", std::string(rule::kTrainingDataPoisoning), "Training data provenance",
       "Track provenance of training records and sanitize them before use.", 50},
      {"M-LLM02", std::string(rule::kInsecureOutput), "Output validation and encoding",
       "Treat model output as untrusted: validate, encode and filter system prompt content.", 60},
      {"M-LLM06", std::string(rule::kSensitiveDisclosure), "Context minimization and redaction",
       "Limit sensitive records placed in context and redact them from output.", 50},
      {"M-LLM04", std::string(rule::kModelDos), "Rate and size limits",
       "Cap request rate, input length and generation length per client.", 60},
      {"M-LLM05", std::string(rule::kSupplyChain), "Artifact provenance checks",
       "Verify signatures and provenance of models, datasets and dependencies.", 30},
      {"M-LLM08", std::string(rule::kExcessiveAgency), "Least-privilege actions",
       "Restrict model-triggered actions to the minimum scope and require approval for "
       "privileged ones.",
       50},
      {"M-LLM07", std::string(rule::kPluginDesign), "Plugin input validation",
       "Validate plugin arguments and scope plugin authorization per request.", 50},
      {"M-LLM09", std::string(rule::kOverreliance), "Human review",
       "Require review of model output before consequential use.", 30},
      {"M-LLM10", std::string(rule::kModelTheft), "Model artifact protection",
       "Encrypt model artifacts and restrict who may export them.", 60},
  };
  return c;
}

}  // namespace

const ThreatCatalog& builtin_catalog() {
  static const ThreatCatalog catalog = make_builtin();
  return catalog;
}

// ---------------------------------------------------------------------------
// JSON form

namespace {

using ojson = nlohmann::ordered_json;

std::string_view to_string(SubjectKind k) {
  switch (k) {
    case SubjectKind::Element: return "element";
    case SubjectKind::Flow: return "flow";
    case SubjectKind::Cycle: return "cycle";
  }
  return "element";
}

ojson opt(const std::optional<std::string>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<std::string> opt_string(const ojson& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

void check_range(int v, int lo, int hi, const std::string& what) {
  if (v < lo || v > hi)
    throw CatalogError(what + " out of range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       "]");
}

template <typename T>
void upsert(std::vector<T>& items, T item) {
  for (auto& existing : items) {
    if (existing.id == item.id) {
      existing = std::move(item);
      return;
    }
  }
  items.push_back(std::move(item));
}

}  // namespace

std::string catalog_to_json(const ThreatCatalog& c) {
  ojson j;
  j["owasp"] = ojson::array();
  for (const auto& o : c.owasp)
    j["owasp"].push_back({{"id", o.id}, {"name", o.name}, {"description", o.description}});
  j["tactics"] = ojson::array();
  for (const auto& t : c.tactics) j["tactics"].push_back({{"id", t.id}, {"name", t.name}});
  j["techniques"] = ojson::array();
  for (const auto& t : c.techniques) {
    j["techniques"].push_back({{"id", t.id},
                               {"name", t.name},
                               {"tactics", t.tactics},
                               {"owasp", opt(t.owasp_id)},
                               {"listedAs", opt(t.listed_as)},
                               {"description", t.description}});
  }
  j["rules"] = ojson::array();
  for (const auto& r : c.rules) {
    ojson stride = ojson::array();
    for (auto s : r.stride) stride.push_back(std::string(to_string(s)));
    j["rules"].push_back({{"id", r.id},
                          {"title", r.title},
                          {"description", r.description},
                          {"subjectKind", std::string(to_string(r.subject_kind))},
                          {"stride", stride},
                          {"owasp", opt(r.owasp_id)},
                          {"atlas", opt(r.atlas_id)},
                          {"likelihood", r.likelihood},
                          {"impact", r.impact},
                          {"llmSpecific", r.llm_specific}});
  }
  j["mitigations"] = ojson::array();
  for (const auto& m : c.mitigations) {
    j["mitigations"].push_back({{"id", m.id},
                                {"rule", m.rule_id},
                                {"name", m.name},
                                {"description", m.description},
                                {"riskReduction", m.risk_reduction}});
  }
  return j.dump(2) + "\n";
}

ThreatCatalog load_catalog(std::string_view json_text) {
  ThreatCatalog c = builtin_catalog();
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const ojson::parse_error& e) {
    throw CatalogError(std::string("catalog is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CatalogError("catalog root must be an object");

  try {
    for (const auto& o : j.value("owasp", ojson::array())) {
      upsert(c.owasp, OwaspEntry{o.at("id").get<std::string>(), o.at("name").get<std::string>(),
                                 o.value("description", std::string())});
    }
    for (const auto& t : j.value("tactics", ojson::array()))
      upsert(c.tactics, AtlasTactic{t.at("id").get<std::string>(), t.at("name").get<std::string>()});
    for (const auto& t : j.value("techniques", ojson::array())) {
      AtlasTechnique tech;
      tech.id = t.at("id").get<std::string>();
      tech.name = t.at("name").get<std::string>();
      tech.tactics = t.at("tactics").get<std::set<std::string>>();
      tech.owasp_id = opt_string(t, "owasp");
      tech.listed_as = opt_string(t, "listedAs");
      tech.description = t.value("description", std::string());
      upsert(c.techniques, std::move(tech));
    }
    for (const auto& r : j.value("rules", ojson::array())) {
      const auto id = r.at("id").get<std::string>();
      auto it = std::find_if(c.rules.begin(), c.rules.end(), [&](const Rule& x) { return x.id == id; });
      if (it == c.rules.end()) throw CatalogError("rule '" + id + "' has no predicate in the engine");
      if (r.contains("title")) it->title = r.at("title").get<std::string>();
      if (r.contains("description")) it->description = r.at("description").get<std::string>();
      if (r.contains("likelihood")) it->likelihood = r.at("likelihood").get<int>();
      if (r.contains("impact")) it->impact = r.at("impact").get<int>();
      if (r.contains("owasp")) it->owasp_id = opt_string(r, "owasp");
      if (r.contains("atlas")) it->atlas_id = opt_string(r, "atlas");
      if (r.contains("stride")) {
        it->stride.clear();
        for (const auto& s : r.at("stride")) {
          auto v = stride_from_string(s.get<std::string>());
          if (!v) throw CatalogError("rule '" + id + "': unknown STRIDE category " + s.dump());
          it->stride.insert(*v);
        }
      }
    }
    for (const auto& m : j.value("mitigations", ojson::array())) {
      MitigationTemplate t{m.at("id").get<std::string>(), m.at("rule").get<std::string>(),
                           m.at("name").get<std::string>(), m.value("description", std::string()),
                           m.at("riskReduction").get<int>()};
      if (!c.find_rule(t.rule_id))
        throw CatalogError("mitigation '" + t.id + "' references unknown rule '" + t.rule_id + "'");
      std::erase_if(c.mitigations, [&](const MitigationTemplate& x) {
        return x.rule_id == t.rule_id || x.id == t.id;
      });
      c.mitigations.push_back(std::move(t));
    }
  } catch (const ojson::exception& e) {
    throw CatalogError(std::string("malformed catalog entry: ") + e.what());
  }

  // Consistency of the merged catalog.
  for (const auto& t : c.techniques) {
    for (const auto& tac : t.tactics)
      if (!c.find_tactic(tac)) throw CatalogError("technique '" + t.id + "' uses unknown tactic '" + tac + "'");
    if (t.owasp_id && !c.find_owasp(*t.owasp_id))
      throw CatalogError("technique '" + t.id + "' maps to unknown OWASP entry");
  }
  for (const auto& r : c.rules) {
    check_range(r.likelihood, 1, 5, "rule '" + r.id + "' likelihood");
    check_range(r.impact, 1, 5, "rule '" + r.id + "' impact");
    if (r.owasp_id && !c.find_owasp(*r.owasp_id))
      throw CatalogError("rule '" + r.id + "' references unknown OWASP entry");
    if (r.atlas_id) {
      const auto* t = c.find_technique(*r.atlas_id);
      if (!t) throw CatalogError("rule '" + r.id + "' references unknown technique");
      if (t->owasp_id && t->owasp_id != r.owasp_id)
        throw CatalogError("rule '" + r.id + "' OWASP id disagrees with its technique mapping");
    }
  }
  for (const auto& m : c.mitigations) check_range(m.risk_reduction, 0, 100, "mitigation '" + m.id + "'");
  return c;
}

// ---------------------------------------------------------------------------
// Graph helpers

namespace graph {

namespace {
std::vector<std::vector<std::size_t>> adjacency(const dfd::Model& m) {
  std::vector<std::vector<std::size_t>> adj(m.elements().size());
  for (const auto& f : m.flows()) adj[m.element_index(f.source)].push_back(m.element_index(f.target));
  return adj;
}

std::vector<bool> bfs_from_successors(const std::vector<std::vector<std::size_t>>& adj,
                                      std::size_t from) {
  std::vector<bool> seen(adj.size(), false);
  std::deque<std::size_t> queue;
  for (auto s : adj[from]) {
    if (!seen[s]) {
      seen[s] = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    for (auto s : adj[v]) {
      if (!seen[s]) {
        seen[s] = true;
        queue.push_back(s);
      }
    }
  }
  return seen;
}
}  // namespace

std::set<std::size_t> reachable_from(const dfd::Model& model, std::size_t from) {
  auto seen = bfs_from_successors(adjacency(model), from);
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) out.insert(i);
  return out;
}

bool reachable_via_intermediate(const dfd::Model& model, std::size_t from, std::size_t to) {
  auto adj = adjacency(model);
  for (auto mid : adj[from]) {
    if (bfs_from_successors(adj, mid)[to]) return true;
  }
  return false;
}

std::vector<std::size_t> cycle_component(const dfd::Model& model, std::size_t v) {
  auto adj = adjacency(model);
  auto forward = bfs_from_successors(adj, v);
  if (!forward[v]) return {};
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < adj.size(); ++u) {
    if (u == v || (forward[u] && bfs_from_successors(adj, u)[v])) out.push_back(u);
  }
  return out;
}

}  // namespace graph

// ---------------------------------------------------------------------------
// Rule engine

std::string IdentifiedThreat::subject_key() const {
  std::string out;
  for (const auto& id : subject_ids) {
    if (!out.empty()) out += '+';
    out += id;
  }
  return out;
}

namespace {

struct Emitter {
  const dfd::Model& model;
  const ThreatCatalog& catalog;
  std::vector<std::tuple<std::size_t, std::string, std::string, IdentifiedThreat>> out;
  std::set<std::pair<std::string, std::string>> seen;

  std::string subject_name(const std::vector<std::string>& ids) const {
    std::string name;
    for (const auto& id : ids) {
      if (!name.empty()) name += ", ";
      if (const auto* e = model.find_element(id)) {
        name += e->name;
      } else if (const auto* f = model.find_flow(id)) {
        name += model.find_element(f->source)->name + " -> " + model.find_element(f->target)->name;
      }
    }
    return name;
  }

  void emit(std::string_view rule_id, std::size_t position, std::vector<std::string> subject) {
    const Rule* r = catalog.find_rule(rule_id);
    if (!r) return;
    IdentifiedThreat t;
    t.rule_id = r->id;
    t.subject_ids = std::move(subject);
    if (!seen.emplace(t.rule_id, t.subject_key()).second) return;
    t.title = r->title + " (" + subject_name(t.subject_ids) + ")";
    t.stride = r->stride;
    t.owasp_id = r->owasp_id;
    t.atlas_id = r->atlas_id;
    t.likelihood = r->likelihood;
    t.impact = r->impact;
    auto key = t.subject_key();
    out.emplace_back(position, t.rule_id, std::move(key), std::move(t));
  }
};

constexpr std::string_view kStrideRuleIds[] = {rule::kStrideS, rule::kStrideT, rule::kStrideR,
                                               rule::kStrideI, rule::kStrideD, rule::kStrideE};

void emit_stride(Emitter& em, const StrideSet& applicable, std::size_t position, const std::string& id) {
  for (std::size_t k = 0; k < 6; ++k)
    if (applicable.count(kAllStride[k])) em.emit(kStrideRuleIds[k], position, {id});
}

}  // namespace

std::vector<IdentifiedThreat> identify_threats(const dfd::Model& model, const ThreatCatalog& catalog) {
  Emitter em{model, catalog, {}, {}};
  const auto& elements = model.elements();
  const auto& flows = model.flows();
  const std::size_t n = elements.size();

  auto is_llm = [&](std::size_t i) { return elements[i].has_tag(dfd::tag::kLlm); };
  auto index_of = [&](const std::string& id) { return model.element_index(id); };

  std::vector<std::size_t> externals;
  for (std::size_t i = 0; i < n; ++i)
    if (elements[i].kind == ElementKind::ExternalEntity) externals.push_back(i);

  // Element-subject rules.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = elements[i];
    emit_stride(em, stride_per_element(e.kind), i, e.id);
    if (!is_llm(i)) continue;

    bool direct = false;
    bool has_sensitive_input = false;
    bool has_output = false;
    for (const auto& f : flows) {
      const auto s = index_of(f.source);
      if (f.target == e.id && elements[s].kind == ElementKind::ExternalEntity) direct = true;
      if (f.target == e.id && elements[s].kind == ElementKind::DataStore &&
          elements[s].has_tag(dfd::tag::kSensitive))
        has_sensitive_input = true;
      if (f.source == e.id) has_output = true;
    }
    bool indirect = false;
    bool reachable = false;
    for (auto x : externals) {
      indirect = indirect || graph::reachable_via_intermediate(model, x, i);
      reachable = reachable || graph::reachable_from(model, x).count(i) > 0;
    }

    if (indirect) em.emit(rule::kPromptInjectionIndirect, i, {e.id});
    if ((direct || indirect) && e.has_tag(dfd::tag::kGuardrails)) em.emit(rule::kJailbreak, i, {e.id});
    if (has_sensitive_input && has_output) em.emit(rule::kSensitiveDisclosure, i, {e.id});
    if (reachable) em.emit(rule::kModelDos, i, {e.id});
    em.emit(rule::kSupplyChain, i, {e.id});
    em.emit(rule::kOverreliance, i, {e.id});

    auto component = graph::cycle_component(model, i);
    if (!component.empty()) {
      std::vector<std::string> members;
      for (auto c : component) members.push_back(elements[c].id);
      em.emit(rule::kSelfReplication, component.front(), std::move(members));
    }
  }

  // Flow-subject rules.
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const auto& f = flows[k];
    const std::size_t pos = n + k;
    const auto& src = elements[index_of(f.source)];
    const auto& dst = elements[index_of(f.target)];
    emit_stride(em, stride_per_flow(), pos, f.id);

    const bool src_llm = src.has_tag(dfd::tag::kLlm);
    const bool dst_llm = dst.has_tag(dfd::tag::kLlm);
    if (dst_llm && src.kind == ElementKind::ExternalEntity) em.emit(rule::kPromptInjectionDirect, pos, {f.id});
    if (dst_llm && src.kind == ElementKind::DataStore && src.has_tag(dfd::tag::kTrainingData))
      em.emit(rule::kTrainingDataPoisoning, pos, {f.id});
    if (src_llm && dst.kind == ElementKind::Process && !dst.has_tag(dfd::tag::kSanitizer))
      em.emit(rule::kInsecureOutput, pos, {f.id});
    if (src_llm && dst.has_tag(dfd::tag::kPrivileged)) em.emit(rule::kExcessiveAgency, pos, {f.id});
    if (src_llm && dst.has_tag(dfd::tag::kPlugin)) em.emit(rule::kPluginDesign, pos, {f.id});
    if (f.crosses_boundary && src.kind == ElementKind::DataStore && src.has_tag(dfd::tag::kModelArtifact))
      em.emit(rule::kModelTheft, pos, {f.id});
  }

  std::stable_sort(em.out.begin(), em.out.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a)) <
           std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b));
  });
  std::vector<IdentifiedThreat> result;
  result.reserve(em.out.size());
  for (auto& entry : em.out) result.push_back(std::move(std::get<3>(entry)));
  return result;
}

}  // namespace liatm::kb
