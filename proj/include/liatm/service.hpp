#pragma once

// HTTP/1.1 JSON API over a session Store.
//
//   POST /api/sessions                         {name?}                  -> 201 {id}
//   GET  /api/sessions                                                  -> 200 [{id,name,createdAt,versions}]
//   POST /api/sessions/{id}/dfd                {text}                   -> 200 {dfdVersion, modelVersion?}
//   POST /api/sessions/{id}/documents          {kind,title,text,weight?} -> 201 {docId, chunks}
//   POST /api/sessions/{id}/generate           {prompt,strategy,backend,k} -> 201 {modelVersion}
//   GET  /api/sessions/{id}/model/{v}                                   -> 200 OTM document
//   GET  /api/sessions/{id}/model/{v}/qa                                -> 200 QA report
//   GET  /api/sessions/{id}/model/{v}/metrics                           -> 200 metrics report
//   GET  /api/sessions/{id}/diff/{v1}/{v2}                              -> 200 diff
//   GET  /api/sessions/{id}/transcript                                  -> 200 [{role,text,timestamp}]
//   GET  /api/healthz                                                   -> 200 {"status":"ok"}
//
// Errors are {"error": {"code", "message"}}.

#include <memory>
#include <string>

#include "liatm/session.hpp"

namespace liatm::service {

class HttpServer {
 public:
  explicit HttpServer(session::Store& store);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  // listen() on a background thread; returns once the server accepts.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace liatm::service
