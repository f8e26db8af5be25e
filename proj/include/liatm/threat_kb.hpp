#pragma once

// Threat knowledge base: STRIDE, OWASP Top 10 for LLM applications, MITRE
// ATLAS techniques with their OWASP cross-mapping, plus the rule engine that
// identifies threats on a DFD.
//
// Catalog note: the published ATLAS/OWASP mapping table lists both "Discover
// LLM Hallucination" and "LLM Plugin Compromise" under AML.T0062. The catalog
// keeps AML.T0062 for the hallucination technique and stores plugin compromise
// under the internal code X-PLUGIN-COMPROMISE (listedAs = "AML.T0062").

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "liatm/dfd.hpp"

namespace liatm::kb {

enum class Stride {
  Spoofing,
  Tampering,
  Repudiation,
  InformationDisclosure,
  DenialOfService,
  ElevationOfPrivilege,
};

inline constexpr Stride kAllStride[] = {
    Stride::Spoofing,        Stride::Tampering,       Stride::Repudiation,
    Stride::InformationDisclosure, Stride::DenialOfService, Stride::ElevationOfPrivilege,
};

using StrideSet = std::set<Stride>;

std::string_view to_string(Stride s);
std::optional<Stride> stride_from_string(std::string_view s);

struct OwaspEntry {
  std::string id;  // LLM01..LLM10
  std::string name;
  std::string description;
};

struct AtlasTactic {
  std::string id;
  std::string name;
};

struct AtlasTechnique {
  std::string id;
  std::string name;
  std::set<std::string> tactics;  // tactic ids
  std::optional<std::string> owasp_id;
  std::optional<std::string> listed_as;  // external id when `id` is internal
  std::string description;
};

enum class SubjectKind { Element, Flow, Cycle };

struct Rule {
  std::string id;
  std::string title;
  std::string description;
  SubjectKind subject_kind = SubjectKind::Element;
  StrideSet stride;
  std::optional<std::string> owasp_id;
  std::optional<std::string> atlas_id;
  int likelihood = 2;
  int impact = 3;
  bool llm_specific = false;
};

// Default mitigation attached by the offline generator to every threat a
// given LLM rule produced.
struct MitigationTemplate {
  std::string id;
  std::string rule_id;
  std::string name;
  std::string description;
  int risk_reduction = 0;  // percent
};

class UnknownTechnique : public std::runtime_error {
 public:
  explicit UnknownTechnique(const std::string& id)
      : std::runtime_error("unknown ATLAS technique '" + id + "'"), id_(id) {}
  [[nodiscard]] const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class CatalogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ThreatCatalog {
  std::vector<OwaspEntry> owasp;
  std::vector<AtlasTactic> tactics;
  std::vector<AtlasTechnique> techniques;
  std::vector<Rule> rules;
  std::vector<MitigationTemplate> mitigations;

  [[nodiscard]] const OwaspEntry* find_owasp(std::string_view id) const;
  [[nodiscard]] const AtlasTactic* find_tactic(std::string_view id) const;
  [[nodiscard]] const AtlasTechnique* find_technique(std::string_view id) const;
  [[nodiscard]] const Rule* find_rule(std::string_view id) const;
  [[nodiscard]] const MitigationTemplate* mitigation_for_rule(std::string_view rule_id) const;

  // Returns the mapped OWASP code; nullopt for unmapped techniques.
  // Throws UnknownTechnique for ids outside the catalog.
  [[nodiscard]] std::optional<std::string> map_atlas_to_owasp(std::string_view technique_id) const;
};

const ThreatCatalog& builtin_catalog();

std::optional<std::string> map_atlas_to_owasp(std::string_view technique_id);

// Overlays a JSON catalog file on the built-in catalog. Entries are matched by
// id; rule entries may only override metadata of rules the engine knows.
// Throws CatalogError.
ThreatCatalog load_catalog(std::string_view json_text);
std::string catalog_to_json(const ThreatCatalog& catalog);

// Standard STRIDE-per-element chart.
StrideSet stride_per_element(dfd::ElementKind kind);
StrideSet stride_per_flow();

// Rule ids.
namespace rule {
inline constexpr std::string_view kStrideS = "R-STRIDE-S";
inline constexpr std::string_view kStrideT = "R-STRIDE-T";
inline constexpr std::string_view kStrideR = "R-STRIDE-R";
inline constexpr std::string_view kStrideI = "R-STRIDE-I";
inline constexpr std::string_view kStrideD = "R-STRIDE-D";
inline constexpr std::string_view kStrideE = "R-STRIDE-E";
inline constexpr std::string_view kPromptInjectionDirect = "R-LLM01-direct";
inline constexpr std::string_view kPromptInjectionIndirect = "R-LLM01-indirect";
inline constexpr std::string_view kJailbreak = "R-JAILBREAK";
inline constexpr std::string_view kSelfReplication = "R-SELFREP";
inline constexpr std::string_view kTrainingDataPoisoning = "R-LLM03";
inline constexpr std::string_view kInsecureOutput = "R-LLM02";
inline constexpr std::string_view kSensitiveDisclosure = "R-LLM06";
inline constexpr std::string_view kModelDos = "R-LLM04";
inline constexpr std::string_view kSupplyChain = "R-LLM05";
inline constexpr std::string_view kExcessiveAgency = "R-LLM08";
inline constexpr std::string_view kPluginDesign = "R-LLM07";
inline constexpr std::string_view kOverreliance = "R-LLM09";
inline constexpr std::string_view kModelTheft = "R-LLM10";
}  // namespace rule

inline constexpr std::string_view kPluginCompromiseId = "X-PLUGIN-COMPROMISE";

struct IdentifiedThreat {
  std::string rule_id;
  // One id for element and flow subjects; the member elements in declaration
  // order for cycle subjects.
  std::vector<std::string> subject_ids;
  std::string title;
  StrideSet stride;
  std::optional<std::string> owasp_id;
  std::optional<std::string> atlas_id;
  int likelihood = 0;
  int impact = 0;

  [[nodiscard]] std::string subject_key() const;  // ids joined with '+'
  bool operator==(const IdentifiedThreat&) const = default;
};

// Deterministic; ordered by (subject declaration position, rule id).
// Element subjects come first, then flows; a cycle sorts with its first member.
std::vector<IdentifiedThreat> identify_threats(const dfd::Model& model,
                                               const ThreatCatalog& catalog = builtin_catalog());

// Graph queries used by the LLM rules, exposed for tests and metrics.
namespace graph {
// Elements reachable from `from` over one or more flows.
std::set<std::size_t> reachable_from(const dfd::Model& model, std::size_t from);
// Whether some directed walk with at least two flows leads from `from` to `to`.
bool reachable_via_intermediate(const dfd::Model& model, std::size_t from, std::size_t to);
// Strongly connected component of `v` if `v` lies on a directed cycle
// (self-loops count), in declaration order; empty otherwise.
std::vector<std::size_t> cycle_component(const dfd::Model& model, std::size_t v);
}  // namespace graph

}  // namespace liatm::kb
