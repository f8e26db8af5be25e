#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "liatm/cli.hpp"
#include "liatm/generation.hpp"
#include "liatm/qa.hpp"
#include "support/fixtures.hpp"
#include "support/stub_server.hpp"
#include "support/temp_dir.hpp"

namespace liatm::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::string kFixture = std::string(LIATM_FIXTURE_DIR) + "/chatbot.dfd";

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args, const std::string& stdin_text = "") {
  args.insert(args.begin(), "liatm");
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

TEST(Cli, HelpListsExitCodes) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("generate"), std::string::npos);
  EXPECT_NE(r.out.find("Exit codes"), std::string::npos);
  EXPECT_EQ(run({}).code, kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run({"generate", "--dfd", kFixture}).code, kUsage);
}

TEST(Cli, GenerateMatchesOfflineOracle) {
  testing::TempDir dir;
  const auto out = dir.path() / "m.otm.json";
  const auto r = run({"generate", "--dfd", kFixture, "--out", out.string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const auto model = dfd::parse(testing::kChatBotDfd);
  EXPECT_EQ(slurp(out), otm::serialize(gen::offline_document(model)));
  EXPECT_NE(r.out.find("health score:"), std::string::npos);
  EXPECT_NE(r.out.find("wrote " + out.string()), std::string::npos);
}

TEST(Cli, GenerateIsDeterministic) {
  testing::TempDir dir;
  std::string first;
  for (int i = 0; i < 5; ++i) {
    const auto out = dir.path() / ("m" + std::to_string(i) + ".otm.json");
    ASSERT_EQ(run({"generate", "--dfd", kFixture, "--out", out.string()}).code, kSuccess);
    if (i == 0) first = slurp(out);
    EXPECT_EQ(slurp(out), first);
  }
}

TEST(Cli, GenerateFromStdinWithJsonReport) {
  testing::TempDir dir;
  const auto out = dir.path() / "m.otm.json";
  const auto r = run({"generate", "--dfd", "-", "--out", out.string(), "--format", "json"}, testing::kChatBotDfd);
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const auto report = json::parse(r.out);
  const auto doc = gen::offline_document(dfd::parse(testing::kChatBotDfd));
  const auto model = dfd::parse(testing::kChatBotDfd);
  const auto expected = qa::run_qa(
      doc, model, qa::select_tests(model, qa::Selection::All, std::numeric_limits<std::size_t>::max(), &doc));
  EXPECT_EQ(report, qa::to_json(expected));
}

TEST(Cli, GenerateWithDocsDirectory) {
  testing::TempDir dir;
  fs::create_directories(dir.path() / "docs");
  write(dir.path() / "docs" / "reqs.md", "# Requirements\nThe chat history is sensitive.\n");
  write(dir.path() / "docs" / "image.png", "binary");
  const auto out = dir.path() / "m.otm.json";
  const auto r = run({"generate", "--dfd", kFixture, "--docs", (dir.path() / "docs").string(), "--out",
                      out.string()});
  EXPECT_EQ(r.code, kSuccess);
  EXPECT_NE(r.err.find("warning: skipping"), std::string::npos);
  EXPECT_EQ(run({"generate", "--dfd", kFixture, "--docs", (dir.path() / "nope").string(), "--out", out.string()})
                .code,
            kInputError);
}

TEST(Cli, InputErrors) {
  testing::TempDir dir;
  const auto out = dir.path() / "m.otm.json";
  auto r = run({"generate", "--dfd", (dir.path() / "missing.dfd").string(), "--out", out.string()});
  EXPECT_EQ(r.code, kInputError);
  EXPECT_NE(r.err.find("cannot read DFD file"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));

  const auto bad = dir.path() / "bad.dfd";
  write(bad, "system \"S\"\nprocess p \"P\" bogus\n");
  r = run({"generate", "--dfd", bad.string(), "--out", out.string()});
  EXPECT_EQ(r.code, kInputError);
  EXPECT_NE(r.err.find(bad.string() + ":2:15: error:"), std::string::npos);

  r = run({"generate", "--dfd", kFixture, "--out", out.string(), "--token-budget", "5"});
  EXPECT_EQ(r.code, kInputError);
  EXPECT_EQ(run({"generate", "--dfd", kFixture, "--out", out.string(), "--backend", "cloud"}).code, kUsage);
}

TEST(Cli, MinHealthGate) {
  testing::TempDir dir;
  const auto out = dir.path() / "m.otm.json";
  EXPECT_EQ(run({"generate", "--dfd", kFixture, "--out", out.string(), "--min-health", "101"}).code, kQaGateFailed);
  EXPECT_EQ(run({"generate", "--dfd", kFixture, "--out", out.string(), "--min-health", "0"}).code, kSuccess);
}

TEST(Cli, RemoteBackend) {
  testing::TempDir dir;
  testing::StubServer stub;
  const auto offline = otm::serialize(gen::offline_document(dfd::parse(testing::kChatBotDfd)));
  stub.enqueue_content("Model follows.\n" + offline);
  stub.enqueue_content("sorry, no model");
  stub.enqueue({401, "{}"});
  const auto config = dir.path() / "config.json";
  write(config, json({{"llm", {{"endpoint", stub.url()}, {"model", "stub"}}}}).dump());
  const auto out = dir.path() / "m.otm.json";
  const std::vector<std::string> args = {"generate", "--dfd",    kFixture,         "--out",
                                         out.string(), "--backend", "remote", "--config", config.string()};
  auto r = run(args);
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(slurp(out), offline);
  fs::remove(out);
  r = run(args);
  EXPECT_EQ(r.code, kQaGateFailed);
  EXPECT_FALSE(fs::exists(out));
  r = run(args);
  EXPECT_EQ(r.code, kRemoteFailure);
}

TEST(Cli, Validate) {
  auto r = run({"validate", "--dfd", kFixture});
  EXPECT_EQ(r.code, kSuccess);
  EXPECT_EQ(r.out, "valid: \"ChatBot\" with 4 elements, 4 flows, 1 boundaries\n");
  r = run({"validate", "--dfd", "-", "--format", "json"}, "system \"S\"\nprocess p \"P\"\n");
  ASSERT_EQ(r.code, kSuccess);
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j["valid"].get<bool>());
  EXPECT_EQ(j["elements"], 1);
  std::set<std::string> codes;
  for (const auto& w : j["warnings"]) codes.insert(w["code"].get<std::string>());
  EXPECT_EQ(codes.size(), 2u);
}

TEST(Cli, QaAndMetricsOnGeneratedModel) {
  testing::TempDir dir;
  const auto out = dir.path() / "m.otm.json";
  ASSERT_EQ(run({"generate", "--dfd", kFixture, "--out", out.string()}).code, kSuccess);

  auto r = run({"qa", "--otm", out.string(), "--dfd", kFixture});
  EXPECT_EQ(r.code, kSuccess);
  EXPECT_NE(r.out.find("metamorphic checks:"), std::string::npos);
  r = run({"qa", "--otm", out.string(), "--dfd", kFixture, "--selection", "coverage-greedy", "--limit", "2",
           "--format", "json"});
  ASSERT_EQ(r.code, kSuccess);
  EXPECT_EQ(json::parse(r.out)["mrResults"].size(), 2u);

  r = run({"metrics", "--otm", out.string(), "--dfd", kFixture, "--reference", out.string(), "--format", "json"});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_NEAR(json::parse(r.out)["accuracy"].get<double>(), 1.0, 1e-9);
  r = run({"metrics", "--otm", out.string(), "--dfd", kFixture});
  EXPECT_NE(r.out.find("residual risk"), std::string::npos);

  const auto other = dir.path() / "other.dfd";
  write(other, "system \"O\"\nprocess p \"P\"\n");
  EXPECT_EQ(run({"metrics", "--otm", out.string(), "--dfd", other.string(), "--reference", out.string()}).code,
            kInputError);
}

TEST(Cli, QaOnCorruptedModelReportsPaths) {
  testing::TempDir dir;
  auto doc = otm::to_json(gen::offline_document(dfd::parse(testing::kChatBotDfd)));
  doc["threats"][0]["likelihood"] = 9;
  doc["threats"][1]["appliesTo"] = {"ghost"};
  const auto path = dir.path() / "bad.otm.json";
  write(path, doc.dump());
  const auto r = run({"qa", "--otm", path.string(), "--dfd", kFixture});
  EXPECT_EQ(r.code, kInputError);
  EXPECT_NE(r.err.find("threats[0].likelihood"), std::string::npos);
  EXPECT_NE(r.err.find("threats[1].appliesTo[0]"), std::string::npos);
  write(path, "{");
  EXPECT_EQ(run({"qa", "--otm", path.string(), "--dfd", kFixture}).code, kInputError);
}

}  // namespace
}  // namespace liatm::cli
