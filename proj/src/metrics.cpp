#include "liatm/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace liatm::metrics {

using ojson = nlohmann::ordered_json;

namespace {

std::set<std::string> classes_of(const otm::Threat& t) {
  std::set<std::string> out;
  for (auto s : t.stride) out.insert(std::string(kb::to_string(s)));
  if (t.owasp_id) out.insert(*t.owasp_id);
  return out;
}

// Positive (subject, class) pairs restricted to the model's subjects.
std::set<std::pair<std::string, std::string>> positives(const otm::Document& doc,
                                                        const std::set<std::string>& subjects) {
  std::set<std::pair<std::string, std::string>> out;
  for (const auto& t : doc.threats) {
    const auto classes = classes_of(t);
    for (const auto& s : t.applies_to) {
      if (!subjects.count(s)) continue;
      for (const auto& c : classes) out.emplace(s, c);
    }
  }
  return out;
}

std::set<std::string> subjects_of(const dfd::Model& model) {
  std::set<std::string> out;
  for (const auto& e : model.elements()) out.insert(e.id);
  for (const auto& f : model.flows()) out.insert(f.id);
  return out;
}

double max_reduction(const otm::Document& doc, const std::string& threat_id) {
  int best = 0;
  for (const auto& m : doc.mitigations) {
    if (std::find(m.mitigates.begin(), m.mitigates.end(), threat_id) != m.mitigates.end())
      best = std::max(best, m.risk_reduction);
  }
  return best;
}

}  // namespace

double total_risk(const otm::Document& doc) {
  double sum = 0.0;
  for (const auto& t : doc.threats) sum += static_cast<double>(t.likelihood * t.impact);
  return sum;
}

double residual_risk(const otm::Document& doc) {
  double sum = 0.0;
  for (const auto& t : doc.threats)
    sum += static_cast<double>(t.likelihood * t.impact) * (1.0 - max_reduction(doc, t.id) / 100.0);
  return sum;
}

double accuracy(const otm::Document& doc, const otm::Document& reference, const dfd::Model& model) {
  const auto subjects = subjects_of(model);
  const std::size_t universe = subjects.size() * kAccuracyClassCount;
  if (universe == 0) return 1.0;
  const auto a = positives(doc, subjects);
  const auto b = positives(reference, subjects);
  std::size_t both = 0;
  for (const auto& p : a) both += b.count(p);
  const std::size_t either = a.size() + b.size() - both;
  const std::size_t neither = universe - either;
  return static_cast<double>(both + neither) / static_cast<double>(universe);
}

Report compute(const otm::Document& doc, const dfd::Model& model, const otm::Document* reference,
               const kb::ThreatCatalog& catalog) {
  Report r;
  if (reference) {
    std::set<std::string> ref_components, elements;
    for (const auto& c : reference->components) ref_components.insert(c.id);
    for (const auto& e : model.elements()) elements.insert(e.id);
    if (ref_components != elements)
      throw ReferenceMismatch("reference components do not match the DFD elements");
    r.accuracy = accuracy(doc, *reference, model);
  }

  const double n_threats = static_cast<double>(doc.threats.size());
  std::set<std::string> mitigated;
  for (const auto& m : doc.mitigations) mitigated.insert(m.mitigates.begin(), m.mitigates.end());
  std::size_t addressed = 0;
  for (const auto& t : doc.threats) addressed += mitigated.count(t.id);
  r.threat_coverage = doc.threats.empty() ? 1.0 : static_cast<double>(addressed) / n_threats;

  std::set<std::string> threatened;
  for (const auto& t : doc.threats) threatened.insert(t.applies_to.begin(), t.applies_to.end());
  std::set<std::string> component_ids;
  for (const auto& c : doc.components) component_ids.insert(c.id);
  std::size_t covered = 0;
  for (const auto& c : component_ids) covered += threatened.count(c);
  const double n_components = static_cast<double>(component_ids.size());
  r.asset_coverage = component_ids.empty() ? 0.0 : static_cast<double>(covered) / n_components;

  std::set<std::string> techniques;
  for (const auto& t : doc.threats)
    if (t.atlas_id && catalog.find_technique(*t.atlas_id)) techniques.insert(*t.atlas_id);
  r.atlas_coverage = catalog.techniques.empty()
                         ? 0.0
                         : static_cast<double>(techniques.size()) /
                               static_cast<double>(catalog.techniques.size());

  std::size_t applies_links = 0;
  for (const auto& t : doc.threats) applies_links += t.applies_to.size();
  std::size_t mitigates_links = 0;
  for (const auto& m : doc.mitigations) mitigates_links += m.mitigates.size();
  r.model_complexity = doc.components.size() + doc.threats.size() + doc.mitigations.size() +
                       doc.dataflows.size() + applies_links + mitigates_links;

  r.total_risk = total_risk(doc);
  r.residual_risk = residual_risk(doc);
  r.mitigation_effectiveness = r.total_risk == 0.0 ? 0.0 : 1.0 - r.residual_risk / r.total_risk;

  int max_likelihood = 0;
  for (const auto& t : doc.threats) {
    max_likelihood = std::max(max_likelihood, t.likelihood);
    r.impact_severity = std::max(r.impact_severity, t.impact);
  }
  r.attack_success_probability = static_cast<double>(max_likelihood) / 5.0;

  std::set<std::size_t> exposed;
  for (std::size_t i = 0; i < model.elements().size(); ++i) {
    if (model.elements()[i].kind != dfd::ElementKind::ExternalEntity) continue;
    auto reach = kb::graph::reachable_from(model, i);
    exposed.insert(reach.begin(), reach.end());
  }
  std::size_t exposed_threatened = 0;
  for (auto i : exposed) {
    const auto& id = model.elements()[i].id;
    if (component_ids.count(id) && threatened.count(id)) ++exposed_threatened;
  }
  r.exposure_level =
      component_ids.empty() ? 0.0 : static_cast<double>(exposed_threatened) / n_components;
  return r;
}

ojson to_json(const Report& r) {
  ojson j;
  j["accuracy"] = r.accuracy ? ojson(*r.accuracy) : ojson(nullptr);
  j["threatCoverage"] = r.threat_coverage;
  j["assetCoverage"] = r.asset_coverage;
  j["atlasCoverage"] = r.atlas_coverage;
  j["modelComplexity"] = r.model_complexity;
  j["totalRisk"] = r.total_risk;
  j["residualRisk"] = r.residual_risk;
  j["mitigationEffectiveness"] = r.mitigation_effectiveness;
  j["attackSuccessProbability"] = r.attack_success_probability;
  j["exposureLevel"] = r.exposure_level;
  j["impactSeverity"] = r.impact_severity;
  j["metadata"] = {
      {"assetCoverage", "static: components referenced by at least one threat; no attack simulation"},
      {"exposureLevel", "static: threatened components reachable from an external entity; no attack simulation"},
      {"accuracyUniverse", "DFD elements and flows x (6 STRIDE + 10 OWASP LLM classes)"},
  };
  return j;
}

Report report_from_json(const ojson& j) {
  Report r;
  if (!j.at("accuracy").is_null()) r.accuracy = j.at("accuracy").get<double>();
  r.threat_coverage = j.at("threatCoverage").get<double>();
  r.asset_coverage = j.at("assetCoverage").get<double>();
  r.atlas_coverage = j.at("atlasCoverage").get<double>();
  r.model_complexity = j.at("modelComplexity").get<std::size_t>();
  r.total_risk = j.at("totalRisk").get<double>();
  r.residual_risk = j.at("residualRisk").get<double>();
  r.mitigation_effectiveness = j.at("mitigationEffectiveness").get<double>();
  r.attack_success_probability = j.at("attackSuccessProbability").get<double>();
  r.exposure_level = j.at("exposureLevel").get<double>();
  r.impact_severity = j.at("impactSeverity").get<int>();
  return r;
}

std::string render_table(const Report& r) {
  std::ostringstream out;
  auto row = [&out](const char* name, const std::string& value) {
    char line[96];
    std::snprintf(line, sizeof line, "%-28s %s\n", name, value.c_str());
    out << line;
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  row("accuracy", r.accuracy ? num(*r.accuracy) : "n/a");
  row("threat coverage", num(r.threat_coverage));
  row("asset coverage (static)", num(r.asset_coverage));
  row("ATLAS coverage", num(r.atlas_coverage));
  row("model complexity", std::to_string(r.model_complexity));
  row("total risk", num(r.total_risk));
  row("residual risk", num(r.residual_risk));
  row("mitigation effectiveness", num(r.mitigation_effectiveness));
  row("attack success probability", num(r.attack_success_probability));
  row("exposure level (static)", num(r.exposure_level));
  row("impact severity", std::to_string(r.impact_severity));
  return out.str();
}

}  // namespace liatm::metrics
