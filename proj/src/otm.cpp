#include "liatm/otm.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_set>

namespace liatm::otm {

using ojson = nlohmann::ordered_json;

const Threat* Document::find_threat(std::string_view id) const {
  for (const auto& t : threats)
    if (t.id == id) return &t;
  return nullptr;
}

namespace {

std::string join_messages(const std::vector<Diagnostic>& diags) {
  std::string out = "threat model failed validation";
  for (const auto& d : diags) out += "\n  " + d.path + ": " + d.message;
  return out;
}

std::string at(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

bool valid_kind(std::string_view k) { return dfd::kind_from_keyword(k).has_value(); }

bool valid_owasp_code(std::string_view c) {
  if (c.size() != 5 || c.substr(0, 3) != "LLM") return false;
  if (c[3] < '0' || c[3] > '9' || c[4] < '0' || c[4] > '9') return false;
  const int n = (c[3] - '0') * 10 + (c[4] - '0');
  return n >= 1 && n <= 10;
}

// JSON -> Document with type diagnostics. Mistyped fields keep their default
// value and their path is recorded so semantic checks do not report it twice.
class Reader {
 public:
  std::vector<Diagnostic> diags;
  std::set<std::string> bad_paths;

  void fail(const std::string& path, std::string message) {
    bad_paths.insert(path);
    diags.push_back({path, std::move(message)});
  }

  const ojson* field(const ojson& obj, const char* key, const std::string& path, bool required) {
    if (!obj.contains(key)) {
      if (required) fail(path, std::string("missing required field '") + key + "'");
      return nullptr;
    }
    return &obj.at(key);
  }

  std::string string(const ojson& obj, const char* key, const std::string& base, bool required = true) {
    const std::string path = base.empty() ? key : base + "." + key;
    const ojson* v = field(obj, key, path, required);
    if (!v) return {};
    if (!v->is_string()) {
      fail(path, "expected a string");
      return {};
    }
    return v->get<std::string>();
  }

  std::optional<std::string> opt_string(const ojson& obj, const char* key, const std::string& base) {
    const std::string path = base + "." + key;
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    if (!obj.at(key).is_string()) {
      fail(path, "expected a string or null");
      return std::nullopt;
    }
    return obj.at(key).get<std::string>();
  }

  int integer(const ojson& obj, const char* key, const std::string& base, int fallback) {
    const std::string path = base + "." + key;
    const ojson* v = field(obj, key, path, true);
    if (!v) return fallback;
    if (!v->is_number_integer()) {
      fail(path, "expected an integer");
      return fallback;
    }
    return v->get<int>();
  }

  std::vector<std::string> strings(const ojson& obj, const char* key, const std::string& base) {
    const std::string path = base + "." + key;
    const ojson* v = field(obj, key, path, true);
    std::vector<std::string> out;
    if (!v) return out;
    if (!v->is_array()) {
      fail(path, "expected an array of strings");
      return out;
    }
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) {
        fail(at(path, i), "expected a string");
        out.emplace_back();
        continue;
      }
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  const ojson* array(const ojson& root, const char* key) {
    const ojson* v = field(root, key, key, true);
    if (v && !v->is_array()) {
      fail(key, "expected an array");
      return nullptr;
    }
    return v;
  }

  bool object(const ojson& v, const std::string& path) {
    if (v.is_object()) return true;
    fail(path, "expected an object");
    return false;
  }
};

Document read_document(const ojson& root, Reader& r) {
  Document doc;
  doc.otm_version = r.string(root, "otmVersion", "");
  if (const ojson* p = r.field(root, "project", "project", true); p && r.object(*p, "project")) {
    doc.project.id = r.string(*p, "id", "project");
    doc.project.name = r.string(*p, "name", "project");
  }
  if (const ojson* arr = r.array(root, "components")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto path = at("components", i);
      const auto& o = (*arr)[i];
      Component c;
      if (r.object(o, path)) {
        c.id = r.string(o, "id", path);
        c.name = r.string(o, "name", path);
        c.kind = r.string(o, "kind", path);
        c.tags = o.contains("tags") ? r.strings(o, "tags", path) : std::vector<std::string>{};
      }
      doc.components.push_back(std::move(c));
    }
  }
  if (const ojson* arr = r.array(root, "dataflows")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto path = at("dataflows", i);
      const auto& o = (*arr)[i];
      Dataflow f;
      if (r.object(o, path)) {
        f.id = r.string(o, "id", path);
        f.source = r.string(o, "source", path);
        f.target = r.string(o, "target", path);
      }
      doc.dataflows.push_back(std::move(f));
    }
  }
  if (const ojson* arr = r.array(root, "threats")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto path = at("threats", i);
      const auto& o = (*arr)[i];
      Threat t;
      if (r.object(o, path)) {
        t.id = r.string(o, "id", path);
        t.name = r.string(o, "name", path);
        t.description = r.string(o, "description", path, false);
        auto cats = r.strings(o, "strideCategories", path);
        for (std::size_t k = 0; k < cats.size(); ++k) {
          if (auto s = kb::stride_from_string(cats[k])) {
            t.stride.insert(*s);
          } else if (!r.bad_paths.count(at(path + ".strideCategories", k))) {
            r.fail(at(path + ".strideCategories", k), "unknown STRIDE category '" + cats[k] + "'");
          }
        }
        t.owasp_id = r.opt_string(o, "owaspLlmId", path);
        t.atlas_id = r.opt_string(o, "atlasTechniqueId", path);
        t.likelihood = r.integer(o, "likelihood", path, 1);
        t.impact = r.integer(o, "impact", path, 1);
        t.applies_to = r.strings(o, "appliesTo", path);
      }
      doc.threats.push_back(std::move(t));
    }
  }
  if (const ojson* arr = r.array(root, "mitigations")) {
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto path = at("mitigations", i);
      const auto& o = (*arr)[i];
      Mitigation m;
      if (r.object(o, path)) {
        m.id = r.string(o, "id", path);
        m.name = r.string(o, "name", path);
        m.description = r.string(o, "description", path, false);
        m.risk_reduction = r.integer(o, "riskReduction", path, 0);
        m.mitigates = r.strings(o, "mitigates", path);
      }
      doc.mitigations.push_back(std::move(m));
    }
  }
  return doc;
}

template <typename T>
void check_ids(const std::vector<T>& items, const std::string& collection,
               std::vector<Diagnostic>& out) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto path = at(collection, i) + ".id";
    if (items[i].id.empty()) {
      out.push_back({path, "id must be a non-empty string"});
    } else if (!seen.insert(items[i].id).second) {
      out.push_back({path, "duplicate id '" + items[i].id + "' in " + collection});
    }
  }
}

}  // namespace

OtmValidationError::OtmValidationError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(join_messages(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::vector<Diagnostic> validate(const Document& doc) {
  std::vector<Diagnostic> out;
  if (doc.otm_version != kOtmVersion)
    out.push_back({"otmVersion", "expected \"" + std::string(kOtmVersion) + "\""});
  if (doc.project.id.empty()) out.push_back({"project.id", "project id must be non-empty"});

  check_ids(doc.components, "components", out);
  check_ids(doc.dataflows, "dataflows", out);
  check_ids(doc.threats, "threats", out);
  check_ids(doc.mitigations, "mitigations", out);

  std::unordered_set<std::string> component_ids, subject_ids, threat_ids;
  for (const auto& c : doc.components) component_ids.insert(c.id);
  subject_ids = component_ids;
  for (const auto& f : doc.dataflows) subject_ids.insert(f.id);
  for (const auto& t : doc.threats) threat_ids.insert(t.id);

  for (std::size_t i = 0; i < doc.components.size(); ++i) {
    const auto& c = doc.components[i];
    if (!valid_kind(c.kind))
      out.push_back({at("components", i) + ".kind",
                     "kind must be one of external_entity, process, data_store"});
    std::set<std::string> tags(c.tags.begin(), c.tags.end());
    if (tags.size() != c.tags.size()) out.push_back({at("components", i) + ".tags", "duplicate tag"});
  }
  for (std::size_t i = 0; i < doc.dataflows.size(); ++i) {
    const auto& f = doc.dataflows[i];
    if (!component_ids.count(f.source))
      out.push_back({at("dataflows", i) + ".source", "unknown component '" + f.source + "'"});
    if (!component_ids.count(f.target))
      out.push_back({at("dataflows", i) + ".target", "unknown component '" + f.target + "'"});
  }
  for (std::size_t i = 0; i < doc.threats.size(); ++i) {
    const auto& t = doc.threats[i];
    const auto base = at("threats", i);
    if (t.likelihood < 1 || t.likelihood > 5)
      out.push_back({base + ".likelihood", "likelihood must be an integer in [1, 5], got " +
                                               std::to_string(t.likelihood)});
    if (t.impact < 1 || t.impact > 5)
      out.push_back({base + ".impact",
                     "impact must be an integer in [1, 5], got " + std::to_string(t.impact)});
    if (t.owasp_id && !valid_owasp_code(*t.owasp_id))
      out.push_back({base + ".owaspLlmId", "expected a code LLM01..LLM10"});
    if (t.atlas_id && t.atlas_id->empty())
      out.push_back({base + ".atlasTechniqueId", "technique id must be non-empty"});
    if (t.applies_to.empty()) out.push_back({base + ".appliesTo", "appliesTo must not be empty"});
    for (std::size_t k = 0; k < t.applies_to.size(); ++k) {
      if (!subject_ids.count(t.applies_to[k]))
        out.push_back({at(base + ".appliesTo", k),
                       "unknown component or dataflow '" + t.applies_to[k] + "'"});
    }
  }
  for (std::size_t i = 0; i < doc.mitigations.size(); ++i) {
    const auto& m = doc.mitigations[i];
    const auto base = at("mitigations", i);
    if (m.risk_reduction < 0 || m.risk_reduction > 100)
      out.push_back({base + ".riskReduction", "riskReduction must be an integer in [0, 100], got " +
                                                  std::to_string(m.risk_reduction)});
    if (m.mitigates.empty()) out.push_back({base + ".mitigates", "mitigates must not be empty"});
    for (std::size_t k = 0; k < m.mitigates.size(); ++k) {
      if (!threat_ids.count(m.mitigates[k]))
        out.push_back({at(base + ".mitigates", k), "unknown threat '" + m.mitigates[k] + "'"});
    }
  }
  return out;
}

Document parse(std::string_view json_text) {
  ojson root;
  try {
    root = ojson::parse(json_text);
  } catch (const ojson::parse_error& e) {
    throw OtmParseError(std::string("malformed JSON: ") + e.what());
  }
  Reader r;
  if (!root.is_object()) throw OtmValidationError(std::vector<Diagnostic>{{"$", "document root must be an object"}});
  Document doc = read_document(root, r);
  for (auto& d : validate(doc)) {
    if (!r.bad_paths.count(d.path)) r.diags.push_back(std::move(d));
  }
  if (!r.diags.empty()) throw OtmValidationError(std::move(r.diags));
  return doc;
}

Document canonicalize(Document doc) {
  auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
  for (auto& c : doc.components) std::sort(c.tags.begin(), c.tags.end());
  for (auto& t : doc.threats) std::sort(t.applies_to.begin(), t.applies_to.end());
  for (auto& m : doc.mitigations) std::sort(m.mitigates.begin(), m.mitigates.end());
  std::stable_sort(doc.components.begin(), doc.components.end(), by_id);
  std::stable_sort(doc.dataflows.begin(), doc.dataflows.end(), by_id);
  std::stable_sort(doc.threats.begin(), doc.threats.end(), by_id);
  std::stable_sort(doc.mitigations.begin(), doc.mitigations.end(), by_id);
  return doc;
}

namespace {

ojson stride_json(const kb::StrideSet& s) {
  ojson arr = ojson::array();
  for (auto c : s) arr.push_back(std::string(kb::to_string(c)));
  return arr;
}

ojson threat_json(const Threat& t) {
  ojson o;
  o["id"] = t.id;
  o["name"] = t.name;
  o["description"] = t.description;
  o["strideCategories"] = stride_json(t.stride);
  if (t.owasp_id) o["owaspLlmId"] = *t.owasp_id;
  if (t.atlas_id) o["atlasTechniqueId"] = *t.atlas_id;
  o["likelihood"] = t.likelihood;
  o["impact"] = t.impact;
  o["appliesTo"] = t.applies_to;
  return o;
}

}  // namespace

ojson to_json(const Document& input) {
  const Document doc = canonicalize(input);
  ojson j;
  j["otmVersion"] = doc.otm_version;
  j["project"] = {{"id", doc.project.id}, {"name", doc.project.name}};
  j["components"] = ojson::array();
  for (const auto& c : doc.components)
    j["components"].push_back({{"id", c.id}, {"name", c.name}, {"kind", c.kind}, {"tags", c.tags}});
  j["dataflows"] = ojson::array();
  for (const auto& f : doc.dataflows)
    j["dataflows"].push_back({{"id", f.id}, {"source", f.source}, {"target", f.target}});
  j["threats"] = ojson::array();
  for (const auto& t : doc.threats) j["threats"].push_back(threat_json(t));
  j["mitigations"] = ojson::array();
  for (const auto& m : doc.mitigations) {
    j["mitigations"].push_back({{"id", m.id},
                                {"name", m.name},
                                {"description", m.description},
                                {"riskReduction", m.risk_reduction},
                                {"mitigates", m.mitigates}});
  }
  return j;
}

std::string serialize(const Document& doc) { return to_json(doc).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Diff

bool Diff::empty() const {
  return added_threats.empty() && removed_threats.empty() && changed_threats.empty() &&
         added_mitigations.empty() && removed_mitigations.empty();
}

namespace {

template <typename T>
std::pair<std::vector<std::string>, std::vector<std::string>> added_removed(
    const std::vector<T>& before, const std::vector<T>& after) {
  std::set<std::string> a, b;
  for (const auto& x : before) a.insert(x.id);
  for (const auto& x : after) b.insert(x.id);
  std::vector<std::string> added, removed;
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(added));
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(removed));
  return {added, removed};
}

ojson opt_json(const std::optional<std::string>& v) { return v ? ojson(*v) : ojson(nullptr); }

}  // namespace

Diff diff(const Document& before_in, const Document& after_in) {
  const Document before = canonicalize(before_in);
  const Document after = canonicalize(after_in);
  Diff d;
  std::tie(d.added_threats, d.removed_threats) = added_removed(before.threats, after.threats);
  std::tie(d.added_mitigations, d.removed_mitigations) =
      added_removed(before.mitigations, after.mitigations);

  for (const auto& old_t : before.threats) {
    const Threat* new_t = after.find_threat(old_t.id);
    if (!new_t) continue;
    auto change = [&](const char* field, ojson a, ojson b) {
      if (a != b) d.changed_threats.push_back({old_t.id, field, std::move(a), std::move(b)});
    };
    change("name", old_t.name, new_t->name);
    change("description", old_t.description, new_t->description);
    change("strideCategories", stride_json(old_t.stride), stride_json(new_t->stride));
    change("owaspLlmId", opt_json(old_t.owasp_id), opt_json(new_t->owasp_id));
    change("atlasTechniqueId", opt_json(old_t.atlas_id), opt_json(new_t->atlas_id));
    change("likelihood", old_t.likelihood, new_t->likelihood);
    change("impact", old_t.impact, new_t->impact);
    change("appliesTo", old_t.applies_to, new_t->applies_to);
  }
  return d;
}

ojson to_json(const Diff& d) {
  ojson j;
  j["addedThreats"] = d.added_threats;
  j["removedThreats"] = d.removed_threats;
  j["changedThreats"] = ojson::array();
  for (const auto& c : d.changed_threats) {
    j["changedThreats"].push_back(
        {{"threatId", c.threat_id}, {"field", c.field}, {"old", c.old_value}, {"new", c.new_value}});
  }
  j["addedMitigations"] = d.added_mitigations;
  j["removedMitigations"] = d.removed_mitigations;
  return j;
}

Diff diff_from_json(const ojson& j) {
  Diff d;
  d.added_threats = j.at("addedThreats").get<std::vector<std::string>>();
  d.removed_threats = j.at("removedThreats").get<std::vector<std::string>>();
  for (const auto& c : j.at("changedThreats")) {
    d.changed_threats.push_back({c.at("threatId").get<std::string>(), c.at("field").get<std::string>(),
                                 c.at("old"), c.at("new")});
  }
  d.added_mitigations = j.at("addedMitigations").get<std::vector<std::string>>();
  d.removed_mitigations = j.at("removedMitigations").get<std::vector<std::string>>();
  return d;
}

}  // namespace liatm::otm
