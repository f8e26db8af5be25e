#include <gtest/gtest.h>

#include <random>

#include "liatm/generation.hpp"
#include "liatm/otm.hpp"
#include "support/fixtures.hpp"
#include "support/random_model.hpp"

namespace liatm::otm {
namespace {

using ojson = nlohmann::ordered_json;

Document small_doc() {
  Document d;
  d.project = {"p", "P"};
  d.components = {{"a", "A", "process", {}}, {"b", "B", "data_store", {"sensitive"}}};
  d.dataflows = {{"f", "a", "b"}};
  Threat t;
  t.id = "t1";
  t.name = "T1";
  t.description = "d";
  t.stride = {kb::Stride::Tampering};
  t.likelihood = 3;
  t.impact = 2;
  t.applies_to = {"a"};
  d.threats = {t};
  d.mitigations = {{"m1", "M1", "", 40, {"t1"}}};
  return d;
}

std::vector<Diagnostic> diagnostics_of(const std::string& text) {
  try {
    parse(text);
  } catch (const OtmValidationError& e) {
    return e.diagnostics();
  }
  return {};
}

bool has_path(const std::vector<Diagnostic>& ds, const std::string& path) {
  return std::any_of(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.path == path; });
}

TEST(OtmSerialize, RoundTripIsByteIdentical) {
  const auto text = serialize(canonicalize(small_doc()));
  EXPECT_EQ(serialize(parse(text)), text);
  EXPECT_EQ(text.back(), '\n');
}

TEST(OtmSerialize, OfflineDocumentsRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto doc = gen::offline_document(testing::random_model(rng));
    const auto text = serialize(doc);
    ASSERT_EQ(serialize(parse(text)), text);
    ASSERT_TRUE(validate(doc).empty());
  }
}

TEST(OtmSerialize, ThreatsSortedById) {
  auto d = small_doc();
  auto t2 = d.threats[0];
  t2.id = "t2";
  d.threats.insert(d.threats.begin(), t2);
  const auto j = to_json(canonicalize(d));
  EXPECT_EQ(j["threats"][0]["id"], "t1");
  EXPECT_EQ(j["threats"][1]["id"], "t2");
}

TEST(OtmSerialize, KeyOrderAndEmptyArrays) {
  Document d;
  d.project = {"p", "P"};
  const auto text = serialize(d);
  EXPECT_NE(text.find("\"threats\": []"), std::string::npos);
  std::vector<std::string> keys;
  const auto parsed = ojson::parse(text);
  for (const auto& [k, _] : parsed.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"otmVersion", "project", "components", "dataflows", "threats",
                                            "mitigations"}));
}

TEST(OtmSerialize, OptionalCodesOmitted) {
  const auto j = to_json(small_doc());
  EXPECT_FALSE(j["threats"][0].contains("owaspLlmId"));
  EXPECT_FALSE(j["threats"][0].contains("atlasTechniqueId"));
}

TEST(OtmSerialize, Deterministic) { EXPECT_EQ(serialize(small_doc()), serialize(small_doc())); }

TEST(OtmParse, MalformedJson) { EXPECT_THROW(parse("{not json"), OtmParseError); }

TEST(OtmParse, DanglingAppliesTo) {
  auto j = to_json(small_doc());
  j["threats"][0]["appliesTo"] = {"ghost"};
  const auto ds = diagnostics_of(j.dump());
  ASSERT_FALSE(ds.empty());
  EXPECT_TRUE(has_path(ds, "threats[0].appliesTo[0]"));
}

TEST(OtmParse, LikelihoodRange) {
  auto j = to_json(small_doc());
  j["threats"][0]["likelihood"] = 7;
  const auto ds = diagnostics_of(j.dump());
  ASSERT_TRUE(has_path(ds, "threats[0].likelihood"));
  for (const auto& d : ds)
    if (d.path == "threats[0].likelihood") {
      EXPECT_NE(d.message.find("[1, 5]"), std::string::npos);
    }
}

TEST(OtmParse, CollectsEveryProblem) {
  auto j = to_json(small_doc());
  j["threats"][0]["likelihood"] = 0;
  j["threats"][0]["impact"] = "high";
  j["threats"][0]["appliesTo"] = ojson::array();
  j["mitigations"][0]["riskReduction"] = 101;
  j["mitigations"][0]["mitigates"] = {"nope"};
  j["dataflows"][0]["target"] = "zzz";
  j["threats"][0]["strideCategories"] = {"Sneaking"};
  const auto ds = diagnostics_of(j.dump());
  for (const char* p : {"threats[0].likelihood", "threats[0].impact", "threats[0].appliesTo",
                        "mitigations[0].riskReduction", "mitigations[0].mitigates[0]", "dataflows[0].target",
                        "threats[0].strideCategories[0]"})
    EXPECT_TRUE(has_path(ds, p)) << p;
}

TEST(OtmParse, DuplicateIdsAndMissingFields) {
  auto j = to_json(small_doc());
  j["components"][1]["id"] = "a";
  j["project"].erase("name");
  const auto ds = diagnostics_of(j.dump());
  EXPECT_TRUE(has_path(ds, "components[1].id"));
  EXPECT_TRUE(has_path(ds, "project.name"));
}

TEST(OtmParse, RootMustBeObject) {
  const auto ds = diagnostics_of("[1,2]");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].path, "$");
}

TEST(OtmDiff, IdentityIsEmpty) {
  const auto d = small_doc();
  EXPECT_TRUE(diff(d, d).empty());
}

TEST(OtmDiff, AddedThreat) {
  const auto a = small_doc();
  auto b = a;
  auto t = b.threats[0];
  t.id = "t9";
  b.threats.push_back(t);
  const auto df = diff(a, b);
  EXPECT_EQ(df.added_threats, std::vector<std::string>{"t9"});
  EXPECT_TRUE(df.removed_threats.empty());
  EXPECT_TRUE(df.changed_threats.empty());
  EXPECT_TRUE(df.added_mitigations.empty());
  EXPECT_TRUE(df.removed_mitigations.empty());
  const auto inv = diff(b, a);
  EXPECT_EQ(inv.removed_threats, df.added_threats);
}

TEST(OtmDiff, LikelihoodChange) {
  const auto a = small_doc();
  auto b = a;
  b.threats[0].likelihood = 4;
  const auto df = diff(a, b);
  ASSERT_EQ(df.changed_threats.size(), 1u);
  EXPECT_EQ(df.changed_threats[0].threat_id, "t1");
  EXPECT_EQ(df.changed_threats[0].field, "likelihood");
  EXPECT_EQ(df.changed_threats[0].old_value, 3);
  EXPECT_EQ(df.changed_threats[0].new_value, 4);
}

TEST(OtmDiff, MitigationsAndJsonRoundTrip) {
  const auto a = small_doc();
  auto b = a;
  b.mitigations[0].id = "m2";
  b.threats[0].applies_to = {"a", "b"};
  const auto df = diff(a, b);
  EXPECT_EQ(df.added_mitigations, std::vector<std::string>{"m2"});
  EXPECT_EQ(df.removed_mitigations, std::vector<std::string>{"m1"});
  EXPECT_EQ(diff_from_json(to_json(df)), df);
  const auto j = to_json(df);
  EXPECT_TRUE(j.contains("addedThreats"));
  EXPECT_TRUE(j.contains("changedThreats"));
}

TEST(OtmDiff, InversionOnRandomDocuments) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100; ++i) {
    const auto a = testing::random_document(rng);
    const auto b = testing::random_document(rng);
    const auto ab = diff(a, b);
    const auto ba = diff(b, a);
    EXPECT_EQ(ab.added_threats, ba.removed_threats);
    EXPECT_EQ(ab.added_mitigations, ba.removed_mitigations);
    EXPECT_EQ(ab.changed_threats.size(), ba.changed_threats.size());
  }
}

}  // namespace
}  // namespace liatm::otm
