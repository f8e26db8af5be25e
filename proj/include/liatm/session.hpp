#pragma once

// Persistent threat-modeling sessions.
//
// On-disk layout under the data root:
//
//   sessions/<id>/session.json        name and creation time
//   sessions/<id>/events.log          one JSON object per line; source of truth
//   sessions/<id>/dfd/v<N>.dfd        canonical DFD text
//   sessions/<id>/docs/<docId>.json   ingested source documents
//   sessions/<id>/models/v<N>/        otm.json, raw.txt, generation.json,
//                                     qa.json, metrics.json, diff.json
//
// A version directory is written under a temporary name and renamed into
// place before its event is appended, so a crash leaves it either complete
// and logged or ignored on reload.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "liatm/dfd.hpp"
#include "liatm/generation.hpp"
#include "liatm/metrics.hpp"
#include "liatm/otm.hpp"
#include "liatm/qa.hpp"
#include "liatm/rag.hpp"
#include "liatm/threat_kb.hpp"

namespace liatm::session {

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SessionNotFound : public std::runtime_error {
 public:
  explicit SessionNotFound(const std::string& id) : std::runtime_error("no session '" + id + "'") {}
};

class VersionNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The model version exists but its generation produced no document.
class DocumentAbsent : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoDfd : public std::runtime_error {
 public:
  NoDfd() : std::runtime_error("the session has no DFD yet") {}
};

class InvalidRequest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SessionSummary {
  std::string id;
  std::string name;
  std::string created_at;
  int versions = 0;  // model versions
};

struct TranscriptEntry {
  std::string role;  // "stakeholder" or "system"
  std::string text;
  std::string timestamp;
};

struct ModelVersion {
  int version = 0;
  int dfd_version = 0;
  std::string created_at;
  std::optional<otm::Document> document;
  std::string raw_text;
  nlohmann::ordered_json generation;  // backend, strategy, prompt accounting
  qa::Report qa;
  std::optional<metrics::Report> metrics;
  otm::Diff diff;  // against the previous model version
};

struct UploadResult {
  int dfd_version = 0;
  std::optional<int> model_version;
};

struct DocumentRequest {
  rag::SourceKind kind = rag::SourceKind::Other;
  std::string title;
  std::string text;
  std::optional<double> weight;
};

struct IngestResult {
  std::string doc_id;
  std::size_t chunks = 0;
};

struct GenerateRequest {
  std::string prompt;
  gen::Strategy strategy = gen::Strategy::Direct;
  gen::Backend backend = gen::Backend::Offline;
  std::size_t k = 5;
};

struct StoreOptions {
  std::filesystem::path data_root;
  bool auto_regenerate = true;
  std::size_t token_budget = 8000;
  gen::RemoteLlmConfig llm;
  const kb::ThreatCatalog* catalog = nullptr;  // builtin when null
};

class Store {
 public:
  // Loads every session found under the data root.
  explicit Store(StoreOptions options);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  std::string create_session(const std::string& name);
  [[nodiscard]] std::vector<SessionSummary> list() const;

  UploadResult upload_dfd(const std::string& id, const std::string& text);
  IngestResult ingest_document(const std::string& id, const DocumentRequest& request);
  // Returns the new model version. A RemoteLlmError is recorded in the
  // transcript and rethrown without appending a version.
  int generate(const std::string& id, const GenerateRequest& request);

  [[nodiscard]] ModelVersion model_version(const std::string& id, int version) const;
  [[nodiscard]] otm::Document document(const std::string& id, int version) const;
  // Threats and mitigations of an absent document count as empty.
  [[nodiscard]] otm::Diff diff(const std::string& id, int v1, int v2) const;
  [[nodiscard]] std::vector<TranscriptEntry> transcript(const std::string& id) const;
  [[nodiscard]] std::optional<dfd::Model> latest_dfd(const std::string& id) const;
  [[nodiscard]] int dfd_version_count(const std::string& id) const;

  [[nodiscard]] const StoreOptions& options() const { return options_; }

 private:
  struct SessionState;
  std::shared_ptr<SessionState> find(const std::string& id) const;
  void load_all();
  std::shared_ptr<SessionState> load_session(const std::filesystem::path& dir) const;
  int append_model_version(SessionState& s, gen::GenerationResult result, nlohmann::ordered_json generation);

  StoreOptions options_;
  const kb::ThreatCatalog& catalog_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<SessionState>> sessions_;
};

nlohmann::ordered_json to_json(const SessionSummary& s);
nlohmann::ordered_json to_json(const TranscriptEntry& t);

// 32 lowercase hex digits from a 128-bit random value.
std::string new_session_id();
// UTC, millisecond precision: 2024-05-01T12:00:00.000Z
std::string now_timestamp();

}  // namespace liatm::session
