#pragma once

// Evaluation metrics over a threat-model document.
//
// Accuracy classifies every (subject, class) pair where subjects are the DFD
// elements and flows and classes are the six STRIDE categories plus the ten
// OWASP LLM codes. A pair is positive in a document when some threat applies
// to the subject and carries the class.
//
// Asset coverage and exposure level are computed statically from the model;
// there is no attack simulation behind them.

#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "liatm/dfd.hpp"
#include "liatm/otm.hpp"
#include "liatm/threat_kb.hpp"

namespace liatm::metrics {

struct Report {
  std::optional<double> accuracy;
  double threat_coverage = 0.0;
  double asset_coverage = 0.0;
  double atlas_coverage = 0.0;
  std::size_t model_complexity = 0;
  double total_risk = 0.0;
  double residual_risk = 0.0;
  double mitigation_effectiveness = 0.0;
  double attack_success_probability = 0.0;
  double exposure_level = 0.0;
  int impact_severity = 0;

  bool operator==(const Report&) const = default;
};

class ReferenceMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kAccuracyClassCount = 16;

// Sum of likelihood * impact.
double total_risk(const otm::Document& doc);
// Sum of likelihood * impact * (1 - max riskReduction of mitigations covering the threat / 100).
double residual_risk(const otm::Document& doc);
// (TP + TN) / |subjects x classes|; 1.0 for an empty universe.
double accuracy(const otm::Document& doc, const otm::Document& reference, const dfd::Model& model);

// Throws ReferenceMismatch when the reference's components are not exactly
// the model's elements.
Report compute(const otm::Document& doc, const dfd::Model& model,
               const otm::Document* reference = nullptr,
               const kb::ThreatCatalog& catalog = kb::builtin_catalog());

nlohmann::ordered_json to_json(const Report& r);
Report report_from_json(const nlohmann::ordered_json& j);

// Aligned two-column text table.
std::string render_table(const Report& r);

}  // namespace liatm::metrics
