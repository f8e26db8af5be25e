#pragma once

// Quality assurance of generated threat models: syntactic validation,
// metamorphic relations checked against the deterministic offline generator,
// test selection, and a 0-100 health score.
//
// Relations:
//   MR1  adding an isolated element keeps every previous threat
//   MR2  a consistent id renaming renames the result and changes nothing else
//   MR3  duplicating an element (with its incident flows) leaves the result,
//        projected onto the original ids, unchanged
//   MR4  removing a mitigation never lowers residual risk

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "liatm/dfd.hpp"
#include "liatm/otm.hpp"
#include "liatm/threat_kb.hpp"

namespace liatm::qa {

enum class Relation {
  ElementAdditionMonotonicity,
  RenamingEquivariance,
  DuplicationSuperset,
  MitigationRemovalRiskMonotonicity,
};

std::string_view code(Relation r);  // "MR1".."MR4"
std::optional<Relation> relation_from_code(std::string_view code);

struct MrInstance {
  Relation relation = Relation::ElementAdditionMonotonicity;
  std::string description;
  std::vector<std::string> touched;        // DFD element ids exercised
  std::optional<dfd::ElementKind> added_kind;  // MR1
  std::string target;                      // MR3 element id, MR4 mitigation id

  bool operator==(const MrInstance&) const = default;
};

enum class Selection { All, CoverageGreedy };
std::optional<Selection> selection_from_string(std::string_view s);

// `all`: MR1 per element kind, one MR2, MR3 per element, MR4 per mitigation
// of `doc` (the offline document when null). `coverage-greedy`: picks by
// largest number of newly touched elements, then largest touched set, then
// enumeration order, until `limit` instances are chosen.
std::vector<MrInstance> select_tests(const dfd::Model& model, Selection selection, std::size_t limit,
                                     const otm::Document* doc = nullptr,
                                     const kb::ThreatCatalog& catalog = kb::builtin_catalog());

struct HealthWeights {
  double component_coverage = 0.4;
  double mr_pass_rate = 0.3;
  double mitigation_coverage = 0.3;
};

// 0 when not syntactically valid, else round(100 * weighted sum).
int health_score(bool syntactic_valid, double component_coverage, double mr_pass_rate,
                 double mitigation_coverage, const HealthWeights& weights = {});

struct MrResult {
  Relation relation;
  std::string instance_description;
  bool passed = false;
  std::string detail;
};

struct Report {
  bool syntactic_valid = false;
  std::vector<MrResult> mr_results;  // sorted by relation, then description
  double component_coverage = 0.0;
  double mitigation_coverage = 0.0;
  int health_score = 0;
  std::vector<otm::Diagnostic> diagnostics;  // parse problems; not serialized

  [[nodiscard]] double mr_pass_rate() const;
};

Report run_qa(const otm::Document& doc, const dfd::Model& model,
              const std::vector<MrInstance>& instances,
              const kb::ThreatCatalog& catalog = kb::builtin_catalog(),
              const HealthWeights& weights = {});

// Raw text variant: a document that fails to parse yields syntacticValid =
// false and health 0.
Report run_qa(std::string_view raw_text, const dfd::Model& model,
              const std::vector<MrInstance>& instances,
              const kb::ThreatCatalog& catalog = kb::builtin_catalog(),
              const HealthWeights& weights = {});

nlohmann::ordered_json to_json(const Report& r);
Report report_from_json(const nlohmann::ordered_json& j);
std::string render_summary(const Report& r);

// Model transformations behind the relations.
struct Transformed {
  dfd::Model model;
  std::vector<std::pair<std::string, std::string>> id_map;  // original -> new
};
Transformed add_isolated_element(const dfd::Model& model, dfd::ElementKind kind);
Transformed rename_ids(const dfd::Model& model);
Transformed duplicate_element(const dfd::Model& model, const std::string& element_id);

}  // namespace liatm::qa
