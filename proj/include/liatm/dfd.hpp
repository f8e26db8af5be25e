#pragma once

// Data-flow diagram model and the line-oriented DFD description language.
//
// A document looks like:
//
//   system "ChatBot"
//   external_entity user "End User"
//   process llm "Chat LLM" tags[llm,guardrails]
//   flow f1 user -> llm : "user message" crosses_boundary
//   boundary internet "Internet" contains[user]
//
// Elements, flows and boundaries share a single id namespace so that threat
// documents can reference any of them unambiguously.

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace liatm::dfd {

enum class ElementKind { ExternalEntity, Process, DataStore };

std::string_view to_keyword(ElementKind kind);
std::optional<ElementKind> kind_from_keyword(std::string_view keyword);

// Tags with rule semantics. Anything else is kept but ignored by the analyzer.
namespace tag {
inline constexpr std::string_view kLlm = "llm";
inline constexpr std::string_view kTrainingData = "training-data";
inline constexpr std::string_view kSensitive = "sensitive";
inline constexpr std::string_view kPlugin = "plugin";
inline constexpr std::string_view kPrivileged = "privileged";
inline constexpr std::string_view kModelArtifact = "model-artifact";
inline constexpr std::string_view kGuardrails = "guardrails";
inline constexpr std::string_view kSanitizer = "sanitizer";
}  // namespace tag

struct Element {
  std::string id;
  std::string name;
  ElementKind kind = ElementKind::Process;
  std::set<std::string> tags;
  std::optional<std::string> boundary;

  [[nodiscard]] bool has_tag(std::string_view t) const {
    return tags.find(std::string(t)) != tags.end();
  }
  bool operator==(const Element&) const = default;
};

struct DataFlow {
  std::string id;
  std::string source;
  std::string target;
  std::string label;
  bool crosses_boundary = false;

  bool operator==(const DataFlow&) const = default;
};

struct TrustBoundary {
  std::string id;
  std::string name;
  std::vector<std::string> members;

  bool operator==(const TrustBoundary&) const = default;
};

class SemanticError;

// Validated, immutable system abstraction. The only ways to obtain one are
// parse() and Model::build(), both of which enforce every referential rule.
class Model {
 public:
  Model() = default;

  // Checks ids, references and boundary membership; fills Element::boundary
  // from the boundary declarations (any preset value must agree).
  // Throws SemanticError.
  static Model build(std::string system_name, std::vector<Element> elements,
                     std::vector<DataFlow> flows,
                     std::vector<TrustBoundary> boundaries);

  [[nodiscard]] const std::string& system_name() const { return system_name_; }
  [[nodiscard]] const std::vector<Element>& elements() const { return elements_; }
  [[nodiscard]] const std::vector<DataFlow>& flows() const { return flows_; }
  [[nodiscard]] const std::vector<TrustBoundary>& boundaries() const { return boundaries_; }

  [[nodiscard]] const Element* find_element(std::string_view id) const;
  [[nodiscard]] const DataFlow* find_flow(std::string_view id) const;
  // Declaration index of an element, or npos.
  [[nodiscard]] std::size_t element_index(std::string_view id) const;
  [[nodiscard]] bool contains_id(std::string_view id) const;

  bool operator==(const Model&) const = default;

 private:
  std::string system_name_;
  std::vector<Element> elements_;
  std::vector<DataFlow> flows_;
  std::vector<TrustBoundary> boundaries_;
};

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(std::size_t line, std::size_t column, const std::string& message);
  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }
  [[nodiscard]] const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string detail_;
};

class SemanticError : public std::runtime_error {
 public:
  SemanticError(std::string entity_id, const std::string& message);
  [[nodiscard]] const std::string& entity_id() const { return entity_id_; }

 private:
  std::string entity_id_;
};

Model parse(std::string_view text);

// Canonical text: system line, elements, flows, boundaries; one statement per
// line, tags sorted, trailing newline.
std::string serialize(const Model& model);

enum class DiagnosticCode { IsolatedElement, FlagWithinBoundary, NoLlmElement };

struct Diagnostic {
  DiagnosticCode code;
  std::string subject;  // offending id, empty for model-level findings
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

std::string_view to_string(DiagnosticCode code);

// Lint warnings only; a Model is already structurally valid.
std::vector<Diagnostic> validate(const Model& model);

// True when `id` matches the identifier grammar [a-z][a-z0-9_-]*.
bool is_identifier(std::string_view id);

}  // namespace liatm::dfd
