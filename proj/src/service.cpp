#include "liatm/service.hpp"

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace liatm::service {

using ojson = nlohmann::ordered_json;

namespace {

struct ApiError {
  int status;
  std::string code;
  std::string message;
  ojson extra = ojson::object();
};

void send_json(httplib::Response& res, int status, const ojson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ApiError& e) {
  ojson err = {{"code", e.code}, {"message", e.message}};
  for (auto& [k, v] : e.extra.items()) err[k] = v;
  send_json(res, e.status, {{"error", err}});
}

ojson body_object(const httplib::Request& req) {
  ojson j;
  try {
    j = ojson::parse(req.body);
  } catch (const ojson::parse_error&) {
    throw ApiError{400, "bad-request", "request body is not valid JSON"};
  }
  if (!j.is_object()) throw ApiError{400, "bad-request", "request body must be a JSON object"};
  return j;
}

template <typename T>
T member(const ojson& j, const char* key, std::optional<T> fallback = std::nullopt) {
  if (!j.contains(key)) {
    if (fallback) return *fallback;
    throw ApiError{400, "bad-request", std::string("missing field '") + key + "'"};
  }
  try {
    return j.at(key).get<T>();
  } catch (const ojson::exception&) {
    throw ApiError{400, "bad-request", std::string("field '") + key + "' has the wrong type"};
  }
}

int version_param(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ApiError{400, "bad-request", "version must be an integer"};
}

// Maps library exceptions onto API errors.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ApiError& e) {
      send_error(res, e);
    } catch (const session::SessionNotFound& e) {
      send_error(res, {404, "session-not-found", e.what()});
    } catch (const session::VersionNotFound& e) {
      send_error(res, {404, "version-not-found", e.what()});
    } catch (const session::DocumentAbsent& e) {
      send_error(res, {404, "document-absent", e.what()});
    } catch (const session::NoDfd& e) {
      send_error(res, {409, "no-dfd", e.what()});
    } catch (const session::InvalidRequest& e) {
      send_error(res, {400, "bad-request", e.what()});
    } catch (const dfd::SyntaxError& e) {
      send_error(res, {422, "dfd-syntax", e.detail(), {{"line", e.line()}, {"column", e.column()}}});
    } catch (const dfd::SemanticError& e) {
      send_error(res, {422, "dfd-semantic", e.what(), {{"entity", e.entity_id()}}});
    } catch (const gen::BudgetTooSmall& e) {
      send_error(res, {422, "budget-too-small", e.what()});
    } catch (const gen::RemoteLlmError& e) {
      send_error(res, {502, "remote-llm", e.what()});
    } catch (const rag::RagError& e) {
      send_error(res, {400, "bad-request", e.what()});
    } catch (const session::StorageError& e) {
      send_error(res, {500, "storage", e.what()});
    } catch (const std::exception& e) {
      send_error(res, {500, "internal", e.what()});
    }
  };
}

}  // namespace

struct HttpServer::Impl {
  session::Store& store;
  httplib::Server server;
  std::thread thread;

  explicit Impl(session::Store& s) : store(s) { routes(); }

  void routes() {
    server.Get("/api/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
                 send_json(res, 200, {{"status", "ok"}});
               }));

    server.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  std::string name;
                  if (!req.body.empty()) name = member<std::string>(body_object(req), "name", std::string());
                  send_json(res, 201, {{"id", store.create_session(name)}});
                }));

    server.Get("/api/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                 ojson out = ojson::array();
                 for (const auto& s : store.list()) out.push_back(session::to_json(s));
                 send_json(res, 200, out);
               }));

    server.Post(R"(/api/sessions/([^/]+)/dfd)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = body_object(req);
                  const auto r = store.upload_dfd(req.matches[1], member<std::string>(body, "text"));
                  ojson out = {{"dfdVersion", r.dfd_version}};
                  if (r.model_version) out["modelVersion"] = *r.model_version;
                  send_json(res, 200, out);
                }));

    server.Post(R"(/api/sessions/([^/]+)/documents)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = body_object(req);
                  session::DocumentRequest dr;
                  const auto kind = rag::source_kind_from_string(member<std::string>(body, "kind"));
                  if (!kind) throw ApiError{400, "bad-request", "unknown document kind"};
                  dr.kind = *kind;
                  dr.title = member<std::string>(body, "title", std::string());
                  dr.text = member<std::string>(body, "text");
                  if (body.contains("weight") && !body.at("weight").is_null())
                    dr.weight = member<double>(body, "weight");
                  const auto r = store.ingest_document(req.matches[1], dr);
                  send_json(res, 201, {{"docId", r.doc_id}, {"chunks", r.chunks}});
                }));

    server.Post(R"(/api/sessions/([^/]+)/generate)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = body_object(req);
                  session::GenerateRequest gr;
                  gr.prompt = member<std::string>(body, "prompt", std::string());
                  const auto strategy =
                      gen::strategy_from_string(member<std::string>(body, "strategy", std::string("direct")));
                  if (!strategy) throw ApiError{400, "bad-request", "unknown strategy"};
                  const auto backend =
                      gen::backend_from_string(member<std::string>(body, "backend", std::string("offline")));
                  if (!backend) throw ApiError{400, "bad-request", "unknown backend"};
                  const int k = member<int>(body, "k", 5);
                  if (k < 0) throw ApiError{400, "bad-request", "k must be non-negative"};
                  gr.strategy = *strategy;
                  gr.backend = *backend;
                  gr.k = static_cast<std::size_t>(k);
                  send_json(res, 201, {{"modelVersion", store.generate(req.matches[1], gr)}});
                }));

    server.Get(R"(/api/sessions/([^/]+)/model/([^/]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto doc = store.document(req.matches[1], version_param(req.matches[2]));
                 res.status = 200;
                 res.set_content(otm::serialize(doc), "application/json");
               }));

    server.Get(R"(/api/sessions/([^/]+)/model/([^/]+)/qa)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto mv = store.model_version(req.matches[1], version_param(req.matches[2]));
                 send_json(res, 200, qa::to_json(mv.qa));
               }));

    server.Get(R"(/api/sessions/([^/]+)/model/([^/]+)/metrics)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const int v = version_param(req.matches[2]);
                 const auto mv = store.model_version(req.matches[1], v);
                 if (!mv.metrics)
                   throw ApiError{404, "document-absent",
                                  "model version " + std::to_string(v) + " has no valid document"};
                 send_json(res, 200, metrics::to_json(*mv.metrics));
               }));

    server.Get(R"(/api/sessions/([^/]+)/diff/([^/]+)/([^/]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto d = store.diff(req.matches[1], version_param(req.matches[2]),
                                           version_param(req.matches[3]));
                 send_json(res, 200, otm::to_json(d));
               }));

    server.Get(R"(/api/sessions/([^/]+)/transcript)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 ojson out = ojson::array();
                 for (const auto& t : store.transcript(req.matches[1])) out.push_back(session::to_json(t));
                 send_json(res, 200, out);
               }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const bool not_found = res.status == 404;
      send_error(res, {res.status, not_found ? "not-found" : "bad-request",
                       not_found ? "no such endpoint" : "request rejected"});
    });
  }
};

HttpServer::HttpServer(session::Store& store) : impl_(std::make_unique<Impl>(store)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw std::runtime_error("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port))
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace liatm::service
