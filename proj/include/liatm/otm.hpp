#pragma once

// Threat-model document: a reduced Open-Threat-Model-style JSON format.
//
// Canonical serialization (the `.otm.json` on-disk form):
//   {
//     "otmVersion": "0.2.0-threomolia",
//     "project":     {"id", "name"},
//     "components":  [{"id", "name", "kind", "tags"}],
//     "dataflows":   [{"id", "source", "target"}],
//     "threats":     [{"id", "name", "description", "strideCategories",
//                      "owaspLlmId"?, "atlasTechniqueId"?, "likelihood",
//                      "impact", "appliesTo"}],
//     "mitigations": [{"id", "name", "description", "riskReduction",
//                      "mitigates"}]
//   }
// Keys appear in exactly this order, every array of objects is sorted by id,
// id lists (tags, appliesTo, mitigates) are sorted, absent optional codes are
// omitted, indentation is two spaces and the text ends with a newline.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "liatm/threat_kb.hpp"

namespace liatm::otm {

inline constexpr std::string_view kOtmVersion = "0.2.0-threomolia";

struct Project {
  std::string id;
  std::string name;
  bool operator==(const Project&) const = default;
};

struct Component {
  std::string id;
  std::string name;
  std::string kind;  // external_entity | process | data_store
  std::vector<std::string> tags;
  bool operator==(const Component&) const = default;
};

struct Dataflow {
  std::string id;
  std::string source;
  std::string target;
  bool operator==(const Dataflow&) const = default;
};

struct Threat {
  std::string id;
  std::string name;
  std::string description;
  kb::StrideSet stride;
  std::optional<std::string> owasp_id;
  std::optional<std::string> atlas_id;
  int likelihood = 1;
  int impact = 1;
  std::vector<std::string> applies_to;
  bool operator==(const Threat&) const = default;
};

struct Mitigation {
  std::string id;
  std::string name;
  std::string description;
  int risk_reduction = 0;
  std::vector<std::string> mitigates;
  bool operator==(const Mitigation&) const = default;
};

struct Document {
  std::string otm_version{kOtmVersion};
  Project project;
  std::vector<Component> components;
  std::vector<Dataflow> dataflows;
  std::vector<Threat> threats;
  std::vector<Mitigation> mitigations;

  [[nodiscard]] const Threat* find_threat(std::string_view id) const;
  bool operator==(const Document&) const = default;
};

struct Diagnostic {
  std::string path;  // e.g. threats[0].appliesTo[0]
  std::string message;
  bool operator==(const Diagnostic&) const = default;
};

class OtmParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OtmValidationError : public std::runtime_error {
 public:
  explicit OtmValidationError(std::vector<Diagnostic> diagnostics);
  [[nodiscard]] const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

// Throws OtmParseError for malformed JSON, OtmValidationError carrying every
// structural and referential problem found.
Document parse(std::string_view json_text);

// Every invariant of the document types; empty when valid.
std::vector<Diagnostic> validate(const Document& doc);

Document canonicalize(Document doc);
nlohmann::ordered_json to_json(const Document& doc);
std::string serialize(const Document& doc);

struct FieldChange {
  std::string threat_id;
  std::string field;
  nlohmann::ordered_json old_value;
  nlohmann::ordered_json new_value;
  bool operator==(const FieldChange&) const = default;
};

struct Diff {
  std::vector<std::string> added_threats;
  std::vector<std::string> removed_threats;
  std::vector<FieldChange> changed_threats;
  std::vector<std::string> added_mitigations;
  std::vector<std::string> removed_mitigations;

  [[nodiscard]] bool empty() const;
  bool operator==(const Diff&) const = default;
};

// Threats and mitigations are matched by id.
Diff diff(const Document& before, const Document& after);
nlohmann::ordered_json to_json(const Diff& d);
Diff diff_from_json(const nlohmann::ordered_json& j);

}  // namespace liatm::otm
