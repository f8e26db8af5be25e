#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "liatm/generation.hpp"
#include "liatm/qa.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/random_model.hpp"

namespace liatm::qa {
namespace {

constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

const dfd::Model& fixture() {
  static const auto m = dfd::parse(testing::kChatBotDfd);
  return m;
}

std::set<std::string> descriptions(const std::vector<MrInstance>& v) {
  std::set<std::string> out;
  for (const auto& i : v) out.insert(std::string(code(i.relation)) + " " + i.description);
  return out;
}

TEST(Health, HandComputedCases) {
  EXPECT_EQ(health_score(true, 0.5, 1.0, 0.0), 50);
  EXPECT_EQ(health_score(true, 1.0, 1.0, 1.0), 100);
  EXPECT_EQ(health_score(false, 1.0, 1.0, 1.0), 0);
  EXPECT_EQ(health_score(true, 0.0, 0.0, 0.0), 0);
  EXPECT_EQ(health_score(true, 0.25, 0.5, 0.5), 40);
}

TEST(Health, MonotoneInEachInput) {
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; b <= 10; ++b)
      for (int c = 0; c < 10; ++c) {
        const double x = a / 10.0, y = b / 10.0, z = c / 10.0, z2 = (c + 1) / 10.0;
        EXPECT_LE(health_score(true, x, y, z), health_score(true, x, y, z2));
        EXPECT_LE(health_score(true, z, x, y), health_score(true, z2, x, y));
        EXPECT_LE(health_score(true, x, z, y), health_score(true, x, z2, y));
      }
}

TEST(Health, CustomWeights) {
  HealthWeights w{1.0, 0.0, 0.0};
  EXPECT_EQ(health_score(true, 0.37, 0.0, 0.0, w), 37);
}

TEST(SelectTests, EmptyModelOnlyMr1AndMr2) {
  const auto all = select_tests(dfd::Model::build("S", {}, {}, {}), Selection::All, kNoLimit);
  ASSERT_EQ(all.size(), 4u);
  for (const auto& i : all)
    EXPECT_TRUE(i.relation == Relation::ElementAdditionMonotonicity || i.relation == Relation::RenamingEquivariance);
}

TEST(SelectTests, AllEnumeration) {
  const auto doc = gen::offline_document(fixture());
  const auto all = select_tests(fixture(), Selection::All, kNoLimit, &doc);
  EXPECT_EQ(all.size(), 3u + 1u + 4u + doc.mitigations.size());
}

TEST(SelectTests, GreedyLimitThreeIsOptimal) {
  const auto all = select_tests(fixture(), Selection::All, kNoLimit);
  const auto picked = select_tests(fixture(), Selection::CoverageGreedy, 3);
  ASSERT_EQ(picked.size(), 3u);
  std::set<std::string> u;
  for (const auto& i : picked) u.insert(i.touched.begin(), i.touched.end());
  EXPECT_EQ(u.size(), testing::best_union_size(all, 3));
}

TEST(SelectTests, LargeLimitEqualsAll) {
  const auto all = select_tests(fixture(), Selection::All, kNoLimit);
  EXPECT_EQ(descriptions(select_tests(fixture(), Selection::CoverageGreedy, all.size())), descriptions(all));
  EXPECT_EQ(descriptions(select_tests(fixture(), Selection::CoverageGreedy, 1000)), descriptions(all));
}

TEST(SelectTests, GreedyOptimalOnSmallRandomModels) {
  std::mt19937_64 rng(12);
  testing::RandomModelOptions o;
  o.max_elements = 5;
  for (int i = 0; i < 40; ++i) {
    const auto m = testing::random_model(rng, o);
    const auto all = select_tests(m, Selection::All, kNoLimit);
    for (std::size_t k = 1; k <= 2; ++k) {
      const auto picked = select_tests(m, Selection::CoverageGreedy, k);
      std::set<std::string> u;
      for (const auto& p : picked) u.insert(p.touched.begin(), p.touched.end());
      // MR2 touches every element, so one pick already covers the maximum.
      EXPECT_EQ(u.size(), testing::best_union_size(all, k));
    }
  }
}

TEST(Transformations, AddIsolatedElement) {
  const auto t = add_isolated_element(fixture(), dfd::ElementKind::DataStore);
  EXPECT_EQ(t.model.elements().size(), 5u);
  EXPECT_EQ(t.model.elements().back().kind, dfd::ElementKind::DataStore);
  EXPECT_EQ(t.model.flows(), fixture().flows());
}

TEST(Transformations, FreshIdsAvoidCollisions) {
  const auto m = dfd::parse("system \"S\"\nprocess mr-added \"P\"\nprocess p-dup \"Q\"\n");
  EXPECT_EQ(add_isolated_element(m, dfd::ElementKind::Process).model.elements().back().id, "mr-added-2");
  EXPECT_EQ(duplicate_element(m, "p-dup").model.elements().back().id, "p-dup-dup");
}

TEST(Transformations, RenameIsBijective) {
  const auto t = rename_ids(fixture());
  EXPECT_EQ(t.id_map.size(), 4u + 4u + 1u);
  std::set<std::string> targets;
  for (const auto& [from, to] : t.id_map) targets.insert(to);
  EXPECT_EQ(targets.size(), t.id_map.size());
  EXPECT_EQ(t.model.elements()[0].id, "re0");
  EXPECT_EQ(t.model.find_element("re0")->boundary, std::optional<std::string>("rb0"));
}

TEST(Transformations, DuplicateCopiesIncidentFlows) {
  const auto t = duplicate_element(fixture(), "llm");
  EXPECT_EQ(t.model.elements().size(), 5u);
  EXPECT_EQ(t.model.flows().size(), 4u + 3u);
  const auto self = duplicate_element(dfd::parse("system \"S\"\nprocess l \"L\"\nflow f l -> l : \"x\"\n"), "l");
  EXPECT_EQ(self.model.flows().back().source, "l-dup");
  EXPECT_EQ(self.model.flows().back().target, "l-dup");
  const auto boundary = duplicate_element(fixture(), "user");
  EXPECT_EQ(boundary.model.find_element("user-dup")->boundary, std::optional<std::string>("internet"));
}

TEST(RunQa, FixtureOfflineDocument) {
  const auto doc = gen::offline_document(fixture());
  const auto r = run_qa(doc, fixture(), select_tests(fixture(), Selection::All, kNoLimit, &doc));
  EXPECT_TRUE(r.syntactic_valid);
  for (const auto& m : r.mr_results) EXPECT_TRUE(m.passed) << m.instance_description << ": " << m.detail;
  EXPECT_EQ(r.mr_pass_rate(), 1.0);
  // Every element and every flow carries at least its STRIDE-per-element threats.
  EXPECT_EQ(r.component_coverage, 8.0 / 8.0);
  std::set<std::string> mitigated;
  for (const auto& m : doc.mitigations) mitigated.insert(m.mitigates.begin(), m.mitigates.end());
  const double mc = static_cast<double>(mitigated.size()) / static_cast<double>(doc.threats.size());
  EXPECT_DOUBLE_EQ(r.mitigation_coverage, mc);
  EXPECT_EQ(r.health_score, static_cast<int>(std::lround(100.0 * (0.4 * 1.0 + 0.3 * 1.0 + 0.3 * mc))));
}

TEST(RunQa, ResultsSortedByRelationThenDescription) {
  const auto doc = gen::offline_document(fixture());
  const auto r = run_qa(doc, fixture(), select_tests(fixture(), Selection::All, kNoLimit, &doc));
  for (std::size_t i = 1; i < r.mr_results.size(); ++i) {
    const auto& a = r.mr_results[i - 1];
    const auto& b = r.mr_results[i];
    EXPECT_TRUE(std::tie(a.relation, a.instance_description) <= std::tie(b.relation, b.instance_description));
  }
}

TEST(RunQa, InvalidRawText) {
  const auto r = run_qa(std::string_view("{\"otmVersion\": 1"), fixture(), {});
  EXPECT_FALSE(r.syntactic_valid);
  EXPECT_EQ(r.health_score, 0);
  EXPECT_FALSE(r.diagnostics.empty());
  const auto r2 = run_qa(std::string_view("{\"otmVersion\": 1}"), fixture(), {});
  EXPECT_FALSE(r2.syntactic_valid);
  EXPECT_EQ(r2.health_score, 0);
}

TEST(RunQa, NoInstancesMeansFullPassRate) {
  const auto doc = gen::offline_document(fixture());
  const auto r = run_qa(doc, fixture(), {});
  EXPECT_EQ(r.mr_pass_rate(), 1.0);
}

TEST(RunQa, UnknownMitigationFailsMr4) {
  const auto doc = gen::offline_document(fixture());
  MrInstance mi;
  mi.relation = Relation::MitigationRemovalRiskMonotonicity;
  mi.description = "remove mitigation ghost";
  mi.target = "ghost";
  const auto r = run_qa(doc, fixture(), {mi});
  ASSERT_EQ(r.mr_results.size(), 1u);
  EXPECT_FALSE(r.mr_results[0].passed);
}

TEST(RunQa, CoverageCountsOnlyModelSubjects) {
  const auto m = dfd::parse("system \"S\"\nprocess a \"A\"\nprocess b \"B\"\nflow f a -> b : \"x\"\n");
  otm::Document d;
  d.project = {"p", "P"};
  d.components = {{"a", "A", "process", {}}, {"b", "B", "process", {}}};
  d.dataflows = {{"f", "a", "b"}};
  otm::Threat t;
  t.id = "t";
  t.name = "T";
  t.likelihood = t.impact = 1;
  t.applies_to = {"a"};
  d.threats = {t};
  const auto r = run_qa(d, m, {});
  EXPECT_NEAR(r.component_coverage, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(r.mitigation_coverage, 0.0);
  EXPECT_EQ(r.health_score, static_cast<int>(std::lround(100.0 * (0.4 / 3.0 + 0.3))));
}

TEST(RunQa, AllRelationsHoldOnRandomModels) {
  std::mt19937_64 rng(77);
  testing::RandomModelOptions o;
  o.max_elements = 8;
  for (int i = 0; i < 200; ++i) {
    const auto m = testing::random_model(rng, o);
    const auto doc = gen::offline_document(m);
    const auto r = run_qa(doc, m, select_tests(m, Selection::All, kNoLimit, &doc));
    for (const auto& mr : r.mr_results)
      ASSERT_TRUE(mr.passed) << code(mr.relation) << " " << mr.instance_description << ": " << mr.detail << "\n"
                             << dfd::serialize(m);
  }
}

TEST(QaJson, ExactFieldsAndRoundTrip) {
  const auto doc = gen::offline_document(fixture());
  const auto r = run_qa(doc, fixture(), select_tests(fixture(), Selection::All, kNoLimit, &doc));
  const auto j = to_json(r);
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"syntacticValid", "mrResults", "componentCoverage", "mitigationCoverage",
                                            "healthScore"}));
  const auto back = report_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_NE(render_summary(r).find("health score"), std::string::npos);
}

}  // namespace
}  // namespace liatm::qa
