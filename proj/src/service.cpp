#include "coda/service.hpp"

#include <httplib.h>

#include "coda/errors.hpp"

namespace coda {

using nlohmann::json;

namespace {

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                  "application/json");
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON body: ") + e.what());
  }
}

template <class T>
T field(const json& body, const char* name) {
  if (!body.contains(name)) throw ConfigError(std::string("missing field ") + name);
  try {
    return body.at(name).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field ") + name + " has the wrong type");
  }
}

}  // namespace

SessionService::SessionService(SessionStore& store, std::optional<std::string> token,
                               std::optional<std::filesystem::path> ui_dir)
    : store_(store), token_(std::move(token)), server_(std::make_unique<httplib::Server>()) {
  if (ui_dir && !server_->set_mount_point("/ui", ui_dir->string())) {
    throw ConfigError("UI directory not found: " + ui_dir->string());
  }
  install_routes();
}

SessionService::~SessionService() { stop(); }

void SessionService::install_routes() {
  auto& srv = *server_;

  srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
    if (!token_ || req.path == "/health" || req.path.rfind("/ui", 0) == 0) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    if (req.get_header_value("Authorization") != "Bearer " + *token_) {
      send_error(res, 401, "unauthorized", "missing or invalid bearer token");
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const ConfigError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const DataError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });

  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}});
  });

  srv.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"sessions", store_.list()}});
  });

  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    json manifest;
    if (body.contains("manifest_path")) {
      manifest = field<std::string>(body, "manifest_path");
    } else if (body.contains("manifest")) {
      manifest = body.at("manifest");
    } else {
      throw ConfigError("body needs manifest_path or manifest");
    }
    const json config = body.contains("config") ? body.at("config") : json(nullptr);
    send_json(res, store_.create(manifest, config), 201);
  });

  srv.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, *store_.state(req.matches[1]));
  });

  srv.Post(R"(/sessions/([^/]+)/labels)",
           [this](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_body(req);
             const auto step = field<long long>(body, "step");
             const auto cls = field<long long>(body, "class_index");
             if (step < 1) throw ConfigError("step must be at least 1");
             if (cls < 0) throw ConfigError("class_index must be non-negative");
             send_json(res, store_.submit_label(req.matches[1], static_cast<std::size_t>(step),
                                                field<std::string>(body, "item_id"),
                                                static_cast<std::size_t>(cls)));
           });

  srv.Post(R"(/sessions/([^/]+)/undo)", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, store_.undo_last(req.matches[1]));
  });

  srv.Get(R"(/sessions/([^/]+)/export)",
          [this](const httplib::Request& req, httplib::Response& res) {
            res.set_content(store_.export_csv(req.matches[1]), "text/csv");
          });
}

bool SessionService::bind(const std::string& host, int port) {
  return server_->bind_to_port(host, port);
}

int SessionService::bind_any(const std::string& host) { return server_->bind_to_any_port(host); }

void SessionService::serve() { server_->listen_after_bind(); }

void SessionService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace coda
