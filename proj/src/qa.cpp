#include "liatm/qa.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "liatm/generation.hpp"
#include "liatm/metrics.hpp"

namespace liatm::qa {

using ojson = nlohmann::ordered_json;

std::string_view code(Relation r) {
  switch (r) {
    case Relation::ElementAdditionMonotonicity: return "MR1";
    case Relation::RenamingEquivariance: return "MR2";
    case Relation::DuplicationSuperset: return "MR3";
    case Relation::MitigationRemovalRiskMonotonicity: return "MR4";
  }
  return "MR1";
}

std::optional<Relation> relation_from_code(std::string_view c) {
  for (auto r : {Relation::ElementAdditionMonotonicity, Relation::RenamingEquivariance,
                 Relation::DuplicationSuperset, Relation::MitigationRemovalRiskMonotonicity}) {
    if (code(r) == c) return r;
  }
  return std::nullopt;
}

std::optional<Selection> selection_from_string(std::string_view s) {
  if (s == "all") return Selection::All;
  if (s == "coverage-greedy") return Selection::CoverageGreedy;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Transformations

namespace {

class IdAllocator {
 public:
  explicit IdAllocator(const dfd::Model& m) {
    for (const auto& e : m.elements()) taken_.insert(e.id);
    for (const auto& f : m.flows()) taken_.insert(f.id);
    for (const auto& b : m.boundaries()) taken_.insert(b.id);
  }
  std::string fresh(const std::string& base) {
    std::string id = base;
    for (int n = 2; taken_.count(id); ++n) id = base + "-" + std::to_string(n);
    taken_.insert(id);
    return id;
  }

 private:
  std::unordered_set<std::string> taken_;
};

std::vector<dfd::Element> elements_without_boundary(const dfd::Model& m) {
  auto out = m.elements();
  for (auto& e : out) e.boundary.reset();
  return out;
}

}  // namespace

Transformed add_isolated_element(const dfd::Model& model, dfd::ElementKind kind) {
  IdAllocator ids(model);
  auto elements = elements_without_boundary(model);
  dfd::Element added;
  added.id = ids.fresh("mr-added");
  added.name = "Added " + std::string(dfd::to_keyword(kind));
  added.kind = kind;
  elements.push_back(added);
  return {dfd::Model::build(model.system_name(), std::move(elements), model.flows(), model.boundaries()),
          {{"", added.id}}};
}

Transformed rename_ids(const dfd::Model& model) {
  std::map<std::string, std::string> map;
  std::vector<std::pair<std::string, std::string>> pairs;
  auto assign = [&](const std::string& from, std::string to) {
    map[from] = to;
    pairs.emplace_back(from, std::move(to));
  };
  for (std::size_t i = 0; i < model.elements().size(); ++i)
    assign(model.elements()[i].id, "re" + std::to_string(i));
  for (std::size_t i = 0; i < model.flows().size(); ++i)
    assign(model.flows()[i].id, "rf" + std::to_string(i));
  for (std::size_t i = 0; i < model.boundaries().size(); ++i)
    assign(model.boundaries()[i].id, "rb" + std::to_string(i));

  auto elements = elements_without_boundary(model);
  for (auto& e : elements) e.id = map.at(e.id);
  auto flows = model.flows();
  for (auto& f : flows) {
    f.id = map.at(f.id);
    f.source = map.at(f.source);
    f.target = map.at(f.target);
  }
  auto boundaries = model.boundaries();
  for (auto& b : boundaries) {
    b.id = map.at(b.id);
    for (auto& m : b.members) m = map.at(m);
  }
  return {dfd::Model::build(model.system_name(), std::move(elements), std::move(flows),
                            std::move(boundaries)),
          std::move(pairs)};
}

Transformed duplicate_element(const dfd::Model& model, const std::string& element_id) {
  const dfd::Element* original = model.find_element(element_id);
  if (!original) throw dfd::SemanticError(element_id, "cannot duplicate unknown element");
  IdAllocator ids(model);
  std::vector<std::pair<std::string, std::string>> pairs;

  auto elements = elements_without_boundary(model);
  dfd::Element copy = *original;
  copy.id = ids.fresh(element_id + "-dup");
  copy.name = original->name + " (copy)";
  copy.boundary.reset();
  elements.push_back(copy);
  pairs.emplace_back(element_id, copy.id);

  auto flows = model.flows();
  for (const auto& f : model.flows()) {
    if (f.source != element_id && f.target != element_id) continue;
    dfd::DataFlow nf = f;
    nf.id = ids.fresh(f.id + "-dup");
    if (nf.source == element_id) nf.source = copy.id;
    if (nf.target == element_id) nf.target = copy.id;
    pairs.emplace_back(f.id, nf.id);
    flows.push_back(std::move(nf));
  }
  auto boundaries = model.boundaries();
  for (auto& b : boundaries) {
    if (std::find(b.members.begin(), b.members.end(), element_id) != b.members.end())
      b.members.push_back(copy.id);
  }
  return {dfd::Model::build(model.system_name(), std::move(elements), std::move(flows),
                            std::move(boundaries)),
          std::move(pairs)};
}

// ---------------------------------------------------------------------------
// Selection

std::vector<MrInstance> select_tests(const dfd::Model& model, Selection selection, std::size_t limit,
                                     const otm::Document* doc, const kb::ThreatCatalog& catalog) {
  std::vector<MrInstance> all;
  for (auto kind : {dfd::ElementKind::ExternalEntity, dfd::ElementKind::Process,
                    dfd::ElementKind::DataStore}) {
    MrInstance mi;
    mi.relation = Relation::ElementAdditionMonotonicity;
    mi.description = "add isolated " + std::string(dfd::to_keyword(kind));
    mi.added_kind = kind;
    all.push_back(std::move(mi));
  }
  {
    MrInstance mi;
    mi.relation = Relation::RenamingEquivariance;
    mi.description = "rename all ids";
    for (const auto& e : model.elements()) mi.touched.push_back(e.id);
    all.push_back(std::move(mi));
  }
  for (const auto& e : model.elements()) {
    MrInstance mi;
    mi.relation = Relation::DuplicationSuperset;
    mi.description = "duplicate element " + e.id;
    mi.touched = {e.id};
    mi.target = e.id;
    all.push_back(std::move(mi));
  }

  std::optional<otm::Document> offline;
  if (!doc) {
    offline = gen::offline_document(model, catalog);
    doc = &*offline;
  }
  for (const auto& m : doc->mitigations) {
    MrInstance mi;
    mi.relation = Relation::MitigationRemovalRiskMonotonicity;
    mi.description = "remove mitigation " + m.id;
    mi.target = m.id;
    std::set<std::string> touched;
    for (const auto& tid : m.mitigates) {
      if (const auto* t = doc->find_threat(tid)) {
        for (const auto& s : t->applies_to)
          if (model.find_element(s)) touched.insert(s);
      }
    }
    for (const auto& e : model.elements())
      if (touched.count(e.id)) mi.touched.push_back(e.id);
    all.push_back(std::move(mi));
  }

  if (selection == Selection::All) return all;

  std::vector<MrInstance> picked;
  std::vector<bool> used(all.size(), false);
  std::set<std::string> covered;
  while (picked.size() < limit && picked.size() < all.size()) {
    std::size_t best = all.size();
    std::size_t best_gain = 0, best_size = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (used[i]) continue;
      std::size_t gain = 0;
      for (const auto& t : all[i].touched) gain += covered.count(t) ? 0 : 1;
      const std::size_t size = all[i].touched.size();
      if (best == all.size() || gain > best_gain || (gain == best_gain && size > best_size)) {
        best = i;
        best_gain = gain;
        best_size = size;
      }
    }
    used[best] = true;
    covered.insert(all[best].touched.begin(), all[best].touched.end());
    picked.push_back(all[best]);
  }
  return picked;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

using Signature = std::tuple<std::string, std::vector<std::string>, std::vector<int>, std::string,
                             std::string, int, int>;

Signature signature_of(const otm::Threat& t, std::vector<std::string> applies) {
  std::sort(applies.begin(), applies.end());
  std::vector<int> stride;
  for (auto s : t.stride) stride.push_back(static_cast<int>(s));
  return {std::string(gen::rule_of_threat_id(t.id)), std::move(applies), std::move(stride),
          t.owasp_id.value_or(""), t.atlas_id.value_or(""), t.likelihood, t.impact};
}

std::set<Signature> signatures(const otm::Document& doc) {
  std::set<Signature> out;
  for (const auto& t : doc.threats) out.insert(signature_of(t, t.applies_to));
  return out;
}

std::string describe_missing(const std::set<Signature>& expected, const std::set<Signature>& actual) {
  for (const auto& s : expected) {
    if (!actual.count(s)) {
      std::string subj;
      for (const auto& id : std::get<1>(s)) subj += (subj.empty() ? "" : "+") + id;
      return "missing " + std::get<0>(s) + " on " + subj;
    }
  }
  for (const auto& s : actual) {
    if (!expected.count(s)) {
      std::string subj;
      for (const auto& id : std::get<1>(s)) subj += (subj.empty() ? "" : "+") + id;
      return "unexpected " + std::get<0>(s) + " on " + subj;
    }
  }
  return {};
}

MrResult run_instance(const MrInstance& mi, const otm::Document& doc, const dfd::Model& model,
                      const std::set<Signature>& base, const kb::ThreatCatalog& catalog) {
  MrResult r{mi.relation, mi.description, false, {}};
  try {
    switch (mi.relation) {
      case Relation::ElementAdditionMonotonicity: {
        auto t = add_isolated_element(model, mi.added_kind.value_or(dfd::ElementKind::Process));
        auto after = signatures(gen::offline_document(t.model, catalog));
        r.passed = std::includes(after.begin(), after.end(), base.begin(), base.end());
        if (!r.passed) r.detail = describe_missing(base, after);
        break;
      }
      case Relation::RenamingEquivariance: {
        auto t = rename_ids(model);
        std::map<std::string, std::string> map(t.id_map.begin(), t.id_map.end());
        std::set<Signature> expected;
        for (const auto& th : gen::offline_document(model, catalog).threats) {
          std::vector<std::string> renamed;
          for (const auto& id : th.applies_to) renamed.push_back(map.at(id));
          expected.insert(signature_of(th, std::move(renamed)));
        }
        auto after = signatures(gen::offline_document(t.model, catalog));
        r.passed = after == expected;
        if (!r.passed) r.detail = describe_missing(expected, after);
        break;
      }
      case Relation::DuplicationSuperset: {
        auto t = duplicate_element(model, mi.target);
        std::set<std::string> original_ids;
        for (const auto& e : model.elements()) original_ids.insert(e.id);
        for (const auto& f : model.flows()) original_ids.insert(f.id);
        std::set<Signature> projected;
        for (const auto& th : gen::offline_document(t.model, catalog).threats) {
          std::vector<std::string> kept;
          for (const auto& id : th.applies_to)
            if (original_ids.count(id)) kept.push_back(id);
          if (!kept.empty()) projected.insert(signature_of(th, std::move(kept)));
        }
        r.passed = projected == base;
        if (!r.passed) r.detail = describe_missing(base, projected);
        break;
      }
      case Relation::MitigationRemovalRiskMonotonicity: {
        otm::Document reduced = doc;
        auto it = std::find_if(reduced.mitigations.begin(), reduced.mitigations.end(),
                               [&](const otm::Mitigation& m) { return m.id == mi.target; });
        if (it == reduced.mitigations.end()) {
          r.detail = "mitigation '" + mi.target + "' is not in the document";
          break;
        }
        reduced.mitigations.erase(it);
        const double before = metrics::residual_risk(doc);
        const double after = metrics::residual_risk(reduced);
        r.passed = after >= before;
        if (!r.passed) r.detail = "residual risk fell from " + std::to_string(before) + " to " + std::to_string(after);
        break;
      }
    }
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = e.what();
  }
  return r;
}

}  // namespace

double Report::mr_pass_rate() const {
  if (mr_results.empty()) return 1.0;
  const auto passed = std::count_if(mr_results.begin(), mr_results.end(),
                                    [](const MrResult& m) { return m.passed; });
  return static_cast<double>(passed) / static_cast<double>(mr_results.size());
}

int health_score(bool syntactic_valid, double component_coverage, double mr_pass_rate,
                 double mitigation_coverage, const HealthWeights& w) {
  if (!syntactic_valid) return 0;
  const double v = 100.0 * (w.component_coverage * component_coverage + w.mr_pass_rate * mr_pass_rate +
                            w.mitigation_coverage * mitigation_coverage);
  return static_cast<int>(std::clamp<long>(std::lround(v), 0L, 100L));
}

Report run_qa(const otm::Document& doc, const dfd::Model& model, const std::vector<MrInstance>& instances,
              const kb::ThreatCatalog& catalog, const HealthWeights& weights) {
  Report r;
  auto diags = otm::validate(doc);
  r.syntactic_valid = diags.empty();
  r.diagnostics = std::move(diags);
  if (!r.syntactic_valid) return r;

  std::set<std::string> subjects;
  for (const auto& e : model.elements()) subjects.insert(e.id);
  for (const auto& f : model.flows()) subjects.insert(f.id);
  std::set<std::string> referenced;
  for (const auto& t : doc.threats)
    for (const auto& s : t.applies_to)
      if (subjects.count(s)) referenced.insert(s);
  r.component_coverage =
      subjects.empty() ? 1.0 : static_cast<double>(referenced.size()) / static_cast<double>(subjects.size());

  std::set<std::string> mitigated;
  for (const auto& m : doc.mitigations) mitigated.insert(m.mitigates.begin(), m.mitigates.end());
  std::size_t with_mitigation = 0;
  for (const auto& t : doc.threats) with_mitigation += mitigated.count(t.id);
  r.mitigation_coverage = doc.threats.empty() ? 1.0
                                              : static_cast<double>(with_mitigation) /
                                                    static_cast<double>(doc.threats.size());

  const auto base = signatures(gen::offline_document(model, catalog));
  for (const auto& mi : instances) r.mr_results.push_back(run_instance(mi, doc, model, base, catalog));
  std::stable_sort(r.mr_results.begin(), r.mr_results.end(), [](const MrResult& a, const MrResult& b) {
    return std::tie(a.relation, a.instance_description) < std::tie(b.relation, b.instance_description);
  });

  r.health_score = health_score(true, r.component_coverage, r.mr_pass_rate(), r.mitigation_coverage, weights);
  return r;
}

Report run_qa(std::string_view raw_text, const dfd::Model& model, const std::vector<MrInstance>& instances,
              const kb::ThreatCatalog& catalog, const HealthWeights& weights) {
  try {
    return run_qa(otm::parse(raw_text), model, instances, catalog, weights);
  } catch (const otm::OtmValidationError& e) {
    Report r;
    r.diagnostics = e.diagnostics();
    return r;
  } catch (const otm::OtmParseError& e) {
    Report r;
    r.diagnostics.push_back({"$", e.what()});
    return r;
  }
}

ojson to_json(const Report& r) {
  ojson j;
  j["syntacticValid"] = r.syntactic_valid;
  j["mrResults"] = ojson::array();
  for (const auto& m : r.mr_results) {
    j["mrResults"].push_back({{"relation", std::string(code(m.relation))},
                              {"instanceDescription", m.instance_description},
                              {"passed", m.passed}});
  }
  j["componentCoverage"] = r.component_coverage;
  j["mitigationCoverage"] = r.mitigation_coverage;
  j["healthScore"] = r.health_score;
  return j;
}

Report report_from_json(const ojson& j) {
  Report r;
  r.syntactic_valid = j.at("syntacticValid").get<bool>();
  for (const auto& m : j.at("mrResults")) {
    auto rel = relation_from_code(m.at("relation").get<std::string>());
    if (!rel) throw std::invalid_argument("unknown relation " + m.at("relation").dump());
    r.mr_results.push_back({*rel, m.at("instanceDescription").get<std::string>(), m.at("passed").get<bool>(), {}});
  }
  r.component_coverage = j.at("componentCoverage").get<double>();
  r.mitigation_coverage = j.at("mitigationCoverage").get<double>();
  r.health_score = j.at("healthScore").get<int>();
  return r;
}

std::string render_summary(const Report& r) {
  std::ostringstream out;
  out << "syntactic validity:  " << (r.syntactic_valid ? "valid" : "INVALID") << "\n";
  for (const auto& d : r.diagnostics) out << "  " << d.path << ": " << d.message << "\n";
  std::size_t passed = 0;
  for (const auto& m : r.mr_results) passed += m.passed ? 1 : 0;
  out << "metamorphic checks:  " << passed << "/" << r.mr_results.size() << " passed\n";
  for (const auto& m : r.mr_results) {
    if (m.passed) continue;
    out << "  FAIL " << code(m.relation) << " " << m.instance_description;
    if (!m.detail.empty()) out << ": " << m.detail;
    out << "\n";
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", r.component_coverage);
  out << "component coverage:  " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.4f", r.mitigation_coverage);
  out << "mitigation coverage: " << buf << "\n";
  out << "health score:        " << r.health_score << "\n";
  return out.str();
}

}  // namespace liatm::qa
