#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "ug/scenario.hpp"

namespace httplib {
class Server;
}

namespace ug {

struct ServiceConfig {
  std::filesystem::path scenario_dir;  // holds `<name>.ug`
  std::filesystem::path data_dir;      // one subdirectory per session
};

struct Response {
  int status = 200;
  Json body;
};

/// Session-oriented API over Interaction. Every session persists its memory
/// log (event-log file format), transcript and metadata under data_dir after
/// each request that changes them, and is rehydrated on construction.
class Service {
 public:
  explicit Service(ServiceConfig config);

  /// `path` excludes the query string; `body` is the raw JSON request body.
  Response handle_request(std::string_view method, std::string_view path, std::string_view body);

  std::size_t session_count() const;

 private:
  struct Session {
    std::string id;
    std::string scenario_name;
    std::string persona;
    std::uint64_t state_version = 1;
    std::unique_ptr<Interaction> interaction;
    mutable std::shared_mutex mutex;
  };

  Response create_session(const Json& request);
  Response get_kb(const Session& s) const;
  Response decide(Session& s, const Json& request);
  Response explain(Session& s, const Json& request);
  Response teach(Session& s, const Json& request);
  Response add_event(Session& s, const Json& request);
  Response transcript(const Session& s) const;

  Scenario load_scenario(const std::string& name) const;
  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(const Session& s) const;
  void rehydrate();

  ServiceConfig config_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP/1.1 front end; every route is delegated to Service::handle_request.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Binds; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind.
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  Service& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace ug
