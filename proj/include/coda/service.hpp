#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "coda/session.hpp"

namespace httplib {
class Server;
}

namespace coda {

/// Environment variable holding the optional bearer token.
inline constexpr const char* kTokenEnv = "CODA_SERVICE_TOKEN";

/// HTTP+JSON front end of a SessionStore.
///
///   GET  /health
///   GET  /sessions
///   POST /sessions                 {manifest_path | manifest, config?}
///   GET  /sessions/{id}
///   POST /sessions/{id}/labels     {step, item_id, class_index}
///   POST /sessions/{id}/undo
///   GET  /sessions/{id}/export     text/csv
///
/// Errors are {"error": {"code", "message"}} with codes bad_request (400),
/// unauthorized (401), not_found (404), conflict (409), internal (500).
class SessionService {
 public:
  SessionService(SessionStore& store, std::optional<std::string> token = std::nullopt,
                 std::optional<std::filesystem::path> ui_dir = std::nullopt);
  ~SessionService();

  /// Binds host:port. Returns false when the address cannot be bound.
  bool bind(const std::string& host, int port);
  /// Binds an ephemeral port and returns it, or -1.
  int bind_any(const std::string& host);
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  void install_routes();

  SessionStore& store_;
  std::optional<std::string> token_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace coda
