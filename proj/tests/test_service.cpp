#include <gtest/gtest.h>

#include "liatm/generation.hpp"
#include "support/fixtures.hpp"
#include "support/service_harness.hpp"
#include "support/stub_server.hpp"

namespace liatm::service {
namespace {

using json = nlohmann::ordered_json;
using testing::kChatBotDfd;
using testing::ServiceHarness;

std::string error_code(const ServiceHarness::Reply& r) { return r.body["error"]["code"].get<std::string>(); }

std::string new_session(ServiceHarness& h) {
  const auto r = h.post("/api/sessions", {{"name", "demo"}});
  EXPECT_EQ(r.status, 201);
  return r.body["id"].get<std::string>();
}

TEST(Service, Healthz) {
  ServiceHarness h;
  const auto r = h.get("/api/healthz");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body, json({{"status", "ok"}}));
}

TEST(Service, SessionsCreateAndList) {
  ServiceHarness h;
  EXPECT_EQ(h.get("/api/sessions").body, json::array());
  const auto id = new_session(h);
  EXPECT_EQ(id.size(), 32u);
  const auto unnamed = h.post_raw("/api/sessions", "");
  EXPECT_EQ(unnamed.status, 201);
  const auto list = h.get("/api/sessions");
  ASSERT_EQ(list.status, 200);
  ASSERT_EQ(list.body.size(), 2u);
  for (const auto& s : list.body) {
    EXPECT_TRUE(s.contains("id") && s.contains("name") && s.contains("createdAt") && s.contains("versions"));
    EXPECT_EQ(s["versions"], 0);
  }
}

TEST(Service, UploadRegenerateAndReuploadScenario) {
  ServiceHarness h;
  const auto id = new_session(h);
  const auto up = h.post("/api/sessions/" + id + "/dfd", {{"text", kChatBotDfd}});
  ASSERT_EQ(up.status, 200);
  EXPECT_EQ(up.body, json({{"dfdVersion", 1}, {"modelVersion", 1}}));

  const auto model = h.get("/api/sessions/" + id + "/model/1");
  ASSERT_EQ(model.status, 200);
  EXPECT_EQ(model.raw, otm::serialize(gen::offline_document(dfd::parse(kChatBotDfd))));

  const auto again = h.post("/api/sessions/" + id + "/dfd", {{"text", kChatBotDfd}});
  EXPECT_EQ(again.body["modelVersion"], 2);
  const auto diff = h.get("/api/sessions/" + id + "/diff/1/2");
  ASSERT_EQ(diff.status, 200);
  EXPECT_TRUE(otm::diff_from_json(diff.body).empty());
  EXPECT_EQ(h.get("/api/sessions").body[0]["versions"], 2);
}

TEST(Service, QaMetricsAndTranscript) {
  ServiceHarness h;
  const auto id = new_session(h);
  h.post("/api/sessions/" + id + "/dfd", {{"text", kChatBotDfd}});
  const auto doc = h.post("/api/sessions/" + id + "/documents",
                          {{"kind", "requirements"}, {"title", "reqs"}, {"text", "History must stay private."}});
  ASSERT_EQ(doc.status, 201);
  EXPECT_EQ(doc.body, json({{"docId", "doc-1"}, {"chunks", 1}}));

  const auto gen = h.post("/api/sessions/" + id + "/generate",
                          {{"prompt", "what about history?"}, {"strategy", "direct"}, {"backend", "offline"}, {"k", 3}});
  ASSERT_EQ(gen.status, 201);
  EXPECT_EQ(gen.body, json({{"modelVersion", 2}}));

  const auto q = h.get("/api/sessions/" + id + "/model/2/qa");
  ASSERT_EQ(q.status, 200);
  const auto expected_qa = h.store().model_version(id, 2).qa;
  EXPECT_EQ(q.body, qa::to_json(expected_qa));
  EXPECT_TRUE(q.body["syntacticValid"].get<bool>());

  const auto m = h.get("/api/sessions/" + id + "/model/2/metrics");
  ASSERT_EQ(m.status, 200);
  EXPECT_EQ(metrics::report_from_json(m.body), *h.store().model_version(id, 2).metrics);

  const auto t = h.get("/api/sessions/" + id + "/transcript");
  ASSERT_EQ(t.status, 200);
  ASSERT_EQ(t.body.size(), 2u);
  EXPECT_EQ(t.body[0]["role"], "stakeholder");
  EXPECT_EQ(t.body[0]["text"], "what about history?");
  EXPECT_EQ(t.body[1]["role"], "system");
}

TEST(Service, ErrorCodes) {
  ServiceHarness h;
  const auto id = new_session(h);
  const std::string base = "/api/sessions/" + id;

  auto r = h.get("/api/sessions/deadbeef/transcript");
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(error_code(r), "session-not-found");

  r = h.post(base + "/generate", {{"prompt", "x"}});
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(error_code(r), "no-dfd");

  r = h.post(base + "/dfd", {{"text", "system \"S\"\nprocess p \"P\" bogus\n"}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(error_code(r), "dfd-syntax");
  EXPECT_EQ(r.body["error"]["line"], 2);
  EXPECT_EQ(r.body["error"]["column"], 15);

  r = h.post(base + "/dfd", {{"text", "system \"S\"\nflow f a -> b : \"x\"\n"}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(error_code(r), "dfd-semantic");

  r = h.post_raw(base + "/dfd", "{nope");
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(error_code(r), "bad-request");
  r = h.post(base + "/dfd", json::object());
  EXPECT_EQ(r.status, 400);
  r = h.post(base + "/dfd", {{"text", 5}});
  EXPECT_EQ(r.status, 400);

  h.post(base + "/dfd", {{"text", kChatBotDfd}});
  r = h.get(base + "/model/7");
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(error_code(r), "version-not-found");
  r = h.get(base + "/model/x/qa");
  EXPECT_EQ(r.status, 400);
  r = h.get(base + "/diff/1/9");
  EXPECT_EQ(error_code(r), "version-not-found");

  EXPECT_EQ(h.post(base + "/generate", {{"strategy", "psychic"}}).status, 400);
  EXPECT_EQ(h.post(base + "/generate", {{"backend", "cloud"}}).status, 400);
  EXPECT_EQ(h.post(base + "/generate", {{"k", -1}}).status, 400);
  EXPECT_EQ(h.post(base + "/documents", {{"kind", "poem"}, {"text", "x"}}).status, 400);
  EXPECT_EQ(h.post(base + "/documents", {{"kind", "design"}, {"text", "x"}, {"weight", 3}}).status, 400);

  r = h.post(base + "/generate", {{"backend", "remote"}});
  EXPECT_EQ(r.status, 502);
  EXPECT_EQ(error_code(r), "remote-llm");

  r = h.get("/api/nothing-here");
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(error_code(r), "not-found");
}

TEST(Service, BudgetTooSmall) {
  session::StoreOptions o;
  o.token_budget = 10;
  ServiceHarness h(o);
  const auto id = new_session(h);
  h.post("/api/sessions/" + id + "/dfd", {{"text", kChatBotDfd}});
  const auto r = h.post("/api/sessions/" + id + "/generate", {{"prompt", "x"}});
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(error_code(r), "budget-too-small");
}

class RemoteService : public ::testing::Test {
 protected:
  testing::StubServer stub;
  std::unique_ptr<ServiceHarness> h;
  std::string id;

  void SetUp() override {
    session::StoreOptions o;
    o.llm.endpoint = stub.url();
    o.llm.model = "stub-model";
    h = std::make_unique<ServiceHarness>(o);
    id = new_session(*h);
    h->post("/api/sessions/" + id + "/dfd", {{"text", kChatBotDfd}});
  }

  ServiceHarness::Reply generate() {
    return h->post("/api/sessions/" + id + "/generate", {{"prompt", "p"}, {"backend", "remote"}, {"k", 0}});
  }
};

TEST_F(RemoteService, ValidReply) {
  const auto offline = otm::serialize(gen::offline_document(dfd::parse(kChatBotDfd)));
  stub.enqueue_content(offline);
  ASSERT_EQ(generate().status, 201);
  EXPECT_EQ(h->get("/api/sessions/" + id + "/model/2").raw, offline);
  EXPECT_EQ(h->get("/api/sessions/" + id + "/model/2/qa").body, h->get("/api/sessions/" + id + "/model/1/qa").body);
  EXPECT_EQ(h->get("/api/sessions/" + id + "/model/2/metrics").body,
            h->get("/api/sessions/" + id + "/model/1/metrics").body);
  const auto sent = json::parse(stub.requests().at(0));
  EXPECT_EQ(sent["model"], "stub-model");
  EXPECT_EQ(sent["temperature"], 0);
}

TEST_F(RemoteService, ProseWrappedReply) {
  const auto offline = otm::serialize(gen::offline_document(dfd::parse(kChatBotDfd)));
  stub.enqueue_content("Sure! Here is the threat model:\n```json\n" + offline + "```\nLet me know.");
  ASSERT_EQ(generate().status, 201);
  EXPECT_EQ(h->get("/api/sessions/" + id + "/model/2").raw, offline);
  EXPECT_TRUE(h->get("/api/sessions/" + id + "/diff/1/2").body["addedThreats"].empty());
}

TEST_F(RemoteService, MalformedReply) {
  stub.enqueue_content("{\"otmVersion\": \"0.2.0-threomolia\", \"threats\": [}");
  ASSERT_EQ(generate().status, 201);
  const auto model = h->get("/api/sessions/" + id + "/model/2");
  EXPECT_EQ(model.status, 404);
  EXPECT_EQ(error_code(model), "document-absent");
  const auto q = h->get("/api/sessions/" + id + "/model/2/qa");
  ASSERT_EQ(q.status, 200);
  EXPECT_FALSE(q.body["syntacticValid"].get<bool>());
  EXPECT_EQ(q.body["healthScore"], 0);
  EXPECT_EQ(error_code(h->get("/api/sessions/" + id + "/model/2/metrics")), "document-absent");
  EXPECT_EQ(h->get("/api/sessions/" + id + "/diff/1/2").status, 200);
}

TEST_F(RemoteService, UpstreamFailure) {
  stub.set_fallback({500, "{}"});
  const auto r = generate();
  EXPECT_EQ(r.status, 502);
  EXPECT_EQ(error_code(r), "remote-llm");
  const auto t = h->get("/api/sessions/" + id + "/transcript");
  ASSERT_EQ(t.body.size(), 2u);
  EXPECT_EQ(h->get("/api/sessions/" + id + "/model/2").status, 404);
}

}  // namespace
}  // namespace liatm::service
