#pragma once

#include <httplib.h>

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "liatm/service.hpp"
#include "support/temp_dir.hpp"

namespace liatm::testing {

// A Store and HttpServer on a free loopback port over a fresh data root.
class ServiceHarness {
 public:
  explicit ServiceHarness(session::StoreOptions options = {}) {
    options.data_root = dir_.path();
    options.llm.retry.initial_delay = std::chrono::milliseconds(0);
    store_ = std::make_unique<session::Store>(options);
    server_ = std::make_unique<service::HttpServer>(*store_);
    port_ = server_->bind("127.0.0.1", 0);
    server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  ~ServiceHarness() { server_->stop(); }

  struct Reply {
    int status = 0;
    nlohmann::ordered_json body;
    std::string raw;
  };

  Reply get(const std::string& path) { return wrap(client_->Get(path)); }
  Reply post(const std::string& path, const nlohmann::ordered_json& body) {
    return post_raw(path, body.dump());
  }
  Reply post_raw(const std::string& path, const std::string& body) {
    return wrap(client_->Post(path, body, "application/json"));
  }

  session::Store& store() { return *store_; }
  const std::filesystem::path& data_root() const { return dir_.path(); }

 private:
  static Reply wrap(const httplib::Result& r) {
    Reply out;
    if (!r) return out;
    out.status = r->status;
    out.raw = r->body;
    out.body = nlohmann::ordered_json::parse(r->body, nullptr, false);
    return out;
  }

  TempDir dir_;
  std::unique_ptr<session::Store> store_;
  std::unique_ptr<service::HttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

}  // namespace liatm::testing
