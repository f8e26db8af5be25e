#include "liatm/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>

namespace liatm::session {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StorageError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_all(int fd, const std::string& data, const fs::path& p) {
  const char* ptr = data.data();
  std::size_t left = data.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, ptr, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageError("write failed for " + p.string() + ": " + std::strerror(errno));
    }
    ptr += n;
    left -= static_cast<std::size_t>(n);
  }
}

void write_durable(const fs::path& p, const std::string& data, int flags) {
  const int fd = ::open(p.c_str(), flags, 0644);
  if (fd < 0) throw StorageError("cannot open " + p.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, data, p);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
}

void write_file_atomic(const fs::path& p, const std::string& data) {
  fs::path tmp = p;
  tmp += ".tmp";
  write_durable(tmp, data, O_WRONLY | O_CREAT | O_TRUNC);
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw StorageError("cannot rename " + tmp.string() + ": " + ec.message());
}

void append_line(const fs::path& p, const std::string& line) {
  write_durable(p, line + "\n", O_WRONLY | O_CREAT | O_APPEND);
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw StorageError("cannot create " + p.string() + ": " + ec.message());
}

ojson diagnostics_json(const std::vector<otm::Diagnostic>& diags) {
  ojson out = ojson::array();
  for (const auto& d : diags) out.push_back({{"path", d.path}, {"message", d.message}});
  return out;
}

std::vector<otm::Diagnostic> diagnostics_from_json(const ojson& j) {
  std::vector<otm::Diagnostic> out;
  for (const auto& d : j) out.push_back({d.at("path").get<std::string>(), d.at("message").get<std::string>()});
  return out;
}

ojson document_json(const rag::SourceDocument& d) {
  return {{"id", d.id},
          {"kind", std::string(rag::to_string(d.kind))},
          {"title", d.title},
          {"weight", d.weight},
          {"text", d.text}};
}

rag::SourceDocument document_from_json(const ojson& j) {
  rag::SourceDocument d;
  d.id = j.at("id").get<std::string>();
  auto kind = rag::source_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw StorageError("unknown document kind in store: " + j.at("kind").dump());
  d.kind = *kind;
  d.title = j.at("title").get<std::string>();
  d.weight = j.at("weight").get<double>();
  d.text = j.at("text").get<std::string>();
  return d;
}

}  // namespace

std::string new_session_id() {
  static std::mutex mu;
  static std::random_device rd;
  std::uint64_t hi = 0, lo = 0;
  {
    std::lock_guard lock(mu);
    hi = (static_cast<std::uint64_t>(rd()) << 32) | rd();
    lo = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  }
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

std::string now_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

ojson to_json(const SessionSummary& s) {
  return {{"id", s.id}, {"name", s.name}, {"createdAt", s.created_at}, {"versions", s.versions}};
}

ojson to_json(const TranscriptEntry& t) {
  return {{"role", t.role}, {"text", t.text}, {"timestamp", t.timestamp}};
}

struct Store::SessionState {
  std::string id;
  std::string name;
  std::string created_at;
  fs::path dir;
  mutable std::shared_mutex mu;
  std::vector<std::pair<dfd::Model, std::string>> dfds;
  rag::VectorIndex index;
  std::vector<ModelVersion> models;
  std::vector<TranscriptEntry> transcript;
  std::size_t events = 0;

  void append_event(const std::string& kind, ojson payload, const std::string& timestamp) {
    ojson e;
    e["seq"] = events + 1;
    e["kind"] = kind;
    e["timestamp"] = timestamp;
    for (auto& [k, v] : payload.items()) e[k] = v;
    append_line(dir / "events.log", e.dump());
    ++events;
  }

  void add_transcript(const std::string& role, const std::string& text) {
    TranscriptEntry t{role, text, now_timestamp()};
    append_event("prompt-refined", {{"role", t.role}, {"text", t.text}}, t.timestamp);
    transcript.push_back(std::move(t));
  }
};

Store::Store(StoreOptions options)
    : options_(std::move(options)),
      catalog_(options_.catalog ? *options_.catalog : kb::builtin_catalog()) {
  make_dirs(options_.data_root / "sessions");
  load_all();
}

Store::~Store() = default;

void Store::load_all() {
  for (const auto& entry : fs::directory_iterator(options_.data_root / "sessions")) {
    if (!entry.is_directory()) continue;
    if (!fs::exists(entry.path() / "session.json")) continue;
    auto s = load_session(entry.path());
    sessions_.emplace(s->id, std::move(s));
  }
}

std::shared_ptr<Store::SessionState> Store::load_session(const fs::path& dir) const {
  auto s = std::make_shared<SessionState>();
  s->dir = dir;
  const auto meta = ojson::parse(read_file(dir / "session.json"));
  s->id = meta.at("id").get<std::string>();
  s->name = meta.at("name").get<std::string>();
  s->created_at = meta.at("createdAt").get<std::string>();

  const fs::path log_path = dir / "events.log";
  std::ifstream log(log_path, std::ios::binary);
  std::string line;
  std::uintmax_t good_bytes = 0;
  bool torn = false;
  while (std::getline(log, line)) {
    ojson e;
    try {
      if (log.eof()) throw std::runtime_error("unterminated line");
      e = ojson::parse(line);
    } catch (const std::exception&) {
      torn = true;
      break;
    }
    good_bytes += line.size() + 1;
    ++s->events;
    const auto kind = e.at("kind").get<std::string>();
    const auto ts = e.at("timestamp").get<std::string>();
    if (kind == "dfd-updated") {
      s->dfds.emplace_back(dfd::parse(read_file(dir / e.at("path").get<std::string>())), ts);
    } else if (kind == "document-ingested") {
      const auto doc = document_from_json(ojson::parse(read_file(dir / e.at("path").get<std::string>())));
      s->index.add_document(doc, rag::HashingEmbedder());
    } else if (kind == "prompt-refined") {
      s->transcript.push_back({e.at("role").get<std::string>(), e.at("text").get<std::string>(), ts});
    } else if (kind == "model-generated") {
      const fs::path vdir = dir / e.at("path").get<std::string>();
      ModelVersion mv;
      mv.version = e.at("version").get<int>();
      mv.dfd_version = e.at("dfdVersion").get<int>();
      mv.created_at = ts;
      if (fs::exists(vdir / "otm.json")) mv.document = otm::parse(read_file(vdir / "otm.json"));
      mv.raw_text = read_file(vdir / "raw.txt");
      mv.generation = ojson::parse(read_file(vdir / "generation.json"));
      mv.qa = qa::report_from_json(ojson::parse(read_file(vdir / "qa.json")));
      if (mv.generation.contains("parseDiagnostics"))
        mv.qa.diagnostics = diagnostics_from_json(mv.generation.at("parseDiagnostics"));
      if (fs::exists(vdir / "metrics.json"))
        mv.metrics = metrics::report_from_json(ojson::parse(read_file(vdir / "metrics.json")));
      mv.diff = otm::diff_from_json(ojson::parse(read_file(vdir / "diff.json")));
      s->models.push_back(std::move(mv));
    } else {
      throw StorageError("unknown event kind '" + kind + "' in " + log_path.string());
    }
  }
  if (torn) {
    // A crash mid-append left a partial last line; drop it so later appends stay line-aligned.
    log.close();
    std::error_code ec;
    fs::resize_file(log_path, good_bytes, ec);
    if (ec) throw StorageError("cannot repair " + log_path.string() + ": " + ec.message());
  }
  return s;
}

std::shared_ptr<Store::SessionState> Store::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound(id);
  return it->second;
}

std::string Store::create_session(const std::string& name) {
  auto s = std::make_shared<SessionState>();
  s->name = name;
  s->created_at = now_timestamp();
  std::unique_lock lock(map_mutex_);
  do {
    s->id = new_session_id();
  } while (sessions_.count(s->id));
  s->dir = options_.data_root / "sessions" / s->id;
  make_dirs(s->dir / "dfd");
  make_dirs(s->dir / "docs");
  make_dirs(s->dir / "models");
  write_durable(s->dir / "events.log", "", O_WRONLY | O_CREAT | O_TRUNC);
  const ojson meta = {{"id", s->id}, {"name", s->name}, {"createdAt", s->created_at}};
  write_file_atomic(s->dir / "session.json", meta.dump(2) + "\n");
  sessions_.emplace(s->id, s);
  return s->id;
}

std::vector<SessionSummary> Store::list() const {
  std::vector<std::shared_ptr<SessionState>> all;
  {
    std::shared_lock lock(map_mutex_);
    for (const auto& [_, s] : sessions_) all.push_back(s);
  }
  std::vector<SessionSummary> out;
  for (const auto& s : all) {
    std::shared_lock lock(s->mu);
    out.push_back({s->id, s->name, s->created_at, static_cast<int>(s->models.size())});
  }
  std::sort(out.begin(), out.end(), [](const SessionSummary& a, const SessionSummary& b) {
    return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
  });
  return out;
}

int Store::append_model_version(SessionState& s, gen::GenerationResult result, ojson generation) {
  const dfd::Model& model = s.dfds.back().first;
  ModelVersion mv;
  mv.version = static_cast<int>(s.models.size()) + 1;
  mv.dfd_version = static_cast<int>(s.dfds.size());
  mv.created_at = now_timestamp();
  mv.document = std::move(result.document);
  mv.raw_text = std::move(result.raw_text);
  generation["dfdVersion"] = mv.dfd_version;
  generation["elapsedMillis"] = result.elapsed_millis;
  generation["parseDiagnostics"] = diagnostics_json(result.parse_diagnostics);
  mv.generation = std::move(generation);

  if (mv.document) {
    const auto instances =
        qa::select_tests(model, qa::Selection::All, std::numeric_limits<std::size_t>::max(), &*mv.document, catalog_);
    mv.qa = qa::run_qa(*mv.document, model, instances, catalog_);
    mv.metrics = metrics::compute(*mv.document, model, nullptr, catalog_);
  } else {
    mv.qa.diagnostics = result.parse_diagnostics;
  }
  const otm::Document empty;
  const otm::Document& before =
      (!s.models.empty() && s.models.back().document) ? *s.models.back().document : empty;
  mv.diff = otm::diff(before, mv.document ? *mv.document : empty);

  const std::string rel = "models/v" + std::to_string(mv.version);
  const fs::path final_dir = s.dir / rel;
  const fs::path tmp_dir = s.dir / ("models/.v" + std::to_string(mv.version) + ".tmp");
  std::error_code ec;
  fs::remove_all(tmp_dir, ec);
  fs::remove_all(final_dir, ec);  // left by a crash before the event was logged
  make_dirs(tmp_dir);
  if (mv.document) write_durable(tmp_dir / "otm.json", otm::serialize(*mv.document), O_WRONLY | O_CREAT | O_TRUNC);
  write_durable(tmp_dir / "raw.txt", mv.raw_text, O_WRONLY | O_CREAT | O_TRUNC);
  write_durable(tmp_dir / "generation.json", mv.generation.dump(2) + "\n", O_WRONLY | O_CREAT | O_TRUNC);
  write_durable(tmp_dir / "qa.json", qa::to_json(mv.qa).dump(2) + "\n", O_WRONLY | O_CREAT | O_TRUNC);
  if (mv.metrics)
    write_durable(tmp_dir / "metrics.json", metrics::to_json(*mv.metrics).dump(2) + "\n",
                  O_WRONLY | O_CREAT | O_TRUNC);
  write_durable(tmp_dir / "diff.json", otm::to_json(mv.diff).dump(2) + "\n", O_WRONLY | O_CREAT | O_TRUNC);
  fs::rename(tmp_dir, final_dir, ec);
  if (ec) throw StorageError("cannot publish " + final_dir.string() + ": " + ec.message());

  s.append_event("model-generated", {{"version", mv.version}, {"dfdVersion", mv.dfd_version}, {"path", rel}},
                 mv.created_at);
  s.models.push_back(std::move(mv));
  return s.models.back().version;
}

UploadResult Store::upload_dfd(const std::string& id, const std::string& text) {
  auto s = find(id);
  dfd::Model model = dfd::parse(text);
  std::unique_lock lock(s->mu);
  UploadResult r;
  r.dfd_version = static_cast<int>(s->dfds.size()) + 1;
  const std::string rel = "dfd/v" + std::to_string(r.dfd_version) + ".dfd";
  const std::string ts = now_timestamp();
  write_file_atomic(s->dir / rel, dfd::serialize(model));
  s->append_event("dfd-updated", {{"version", r.dfd_version}, {"path", rel}}, ts);
  s->dfds.emplace_back(std::move(model), ts);

  if (options_.auto_regenerate) {
    ojson generation = {{"trigger", "dfd-upload"}, {"backend", "offline"}};
    r.model_version = append_model_version(*s, gen::generate_offline(s->dfds.back().first, catalog_),
                                           std::move(generation));
  }
  return r;
}

IngestResult Store::ingest_document(const std::string& id, const DocumentRequest& request) {
  auto s = find(id);
  std::unique_lock lock(s->mu);
  rag::SourceDocument doc;
  doc.id = "doc-" + std::to_string(s->index.documents().size() + 1);
  doc.kind = request.kind;
  doc.title = request.title;
  doc.text = request.text;
  doc.weight = request.weight.value_or(rag::default_weight(request.kind));
  if (!(doc.weight >= 0.0 && doc.weight <= 1.0))
    throw InvalidRequest("weight must be in [0, 1]");

  rag::VectorIndex staged = s->index;
  const std::size_t chunks = staged.add_document(doc, rag::HashingEmbedder());
  const std::string rel = "docs/" + doc.id + ".json";
  write_file_atomic(s->dir / rel, document_json(doc).dump(2) + "\n");
  s->append_event("document-ingested", {{"docId", doc.id}, {"path", rel}, {"chunks", chunks}}, now_timestamp());
  s->index = std::move(staged);
  return {doc.id, chunks};
}

int Store::generate(const std::string& id, const GenerateRequest& request) {
  auto s = find(id);
  std::unique_lock lock(s->mu);
  if (s->dfds.empty()) throw NoDfd();
  const dfd::Model& model = s->dfds.back().first;

  const rag::HashingEmbedder embedder;
  const auto retrieved = rag::retrieve(s->index, embedder, request.prompt, request.k);
  const auto bundle = gen::build_prompt(model, request.prompt, request.strategy, retrieved,
                                        options_.token_budget, catalog_);

  s->add_transcript("stakeholder", request.prompt);
  gen::GenerationResult result;
  if (request.backend == gen::Backend::Offline) {
    result = gen::generate_offline(model, catalog_);
  } else {
    try {
      if (options_.llm.endpoint.empty()) throw gen::RemoteLlmError("no LLM endpoint is configured");
      result = gen::generate_remote(bundle, options_.llm);
    } catch (const gen::RemoteLlmError& e) {
      s->add_transcript("system", std::string("generation failed: ") + e.what());
      throw;
    }
  }

  ojson included = ojson::array();
  for (const auto& b : bundle.included_blocks) included.push_back(b.label);
  ojson generation = {{"trigger", "generate"},
                      {"backend", std::string(gen::to_string(request.backend))},
                      {"strategy", std::string(gen::to_string(request.strategy))},
                      {"systemPromptVersion", std::string(gen::kSystemPromptVersion)},
                      {"prompt", request.prompt},
                      {"k", request.k},
                      {"includedBlocks", included},
                      {"droppedBlocks", bundle.dropped_blocks},
                      {"tokenEstimate", bundle.total_token_estimate}};
  const int version = append_model_version(*s, std::move(result), std::move(generation));
  const auto& mv = s->models.back();
  std::string summary = "model version " + std::to_string(version) + ": ";
  if (mv.document) {
    summary += std::to_string(mv.document->threats.size()) + " threats, " +
               std::to_string(mv.document->mitigations.size()) + " mitigations";
  } else {
    summary += "no valid threat model in the response";
  }
  summary += ", health score " + std::to_string(mv.qa.health_score);
  s->add_transcript("system", summary);
  return version;
}

ModelVersion Store::model_version(const std::string& id, int version) const {
  auto s = find(id);
  std::shared_lock lock(s->mu);
  if (version < 1 || version > static_cast<int>(s->models.size()))
    throw VersionNotFound("no model version " + std::to_string(version));
  return s->models[static_cast<std::size_t>(version - 1)];
}

otm::Document Store::document(const std::string& id, int version) const {
  auto mv = model_version(id, version);
  if (!mv.document) throw DocumentAbsent("model version " + std::to_string(version) + " has no valid document");
  return std::move(*mv.document);
}

otm::Diff Store::diff(const std::string& id, int v1, int v2) const {
  const auto a = model_version(id, v1);
  const auto b = model_version(id, v2);
  const otm::Document empty;
  return otm::diff(a.document ? *a.document : empty, b.document ? *b.document : empty);
}

std::vector<TranscriptEntry> Store::transcript(const std::string& id) const {
  auto s = find(id);
  std::shared_lock lock(s->mu);
  return s->transcript;
}

std::optional<dfd::Model> Store::latest_dfd(const std::string& id) const {
  auto s = find(id);
  std::shared_lock lock(s->mu);
  if (s->dfds.empty()) return std::nullopt;
  return s->dfds.back().first;
}

int Store::dfd_version_count(const std::string& id) const {
  auto s = find(id);
  std::shared_lock lock(s->mu);
  return static_cast<int>(s->dfds.size());
}

}  // namespace liatm::session
