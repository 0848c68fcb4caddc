#include "mmb/serve/http.hpp"

#include <filesystem>

#include "httplib.h"

namespace mmb::serve {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, error_json(code, message));
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ServeError("BAD_REQUEST", "body must be a JSON object", 400);
  return j;
}

std::string required_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    throw ServeError("BAD_REQUEST", std::string("missing string field '") + key + "'", 400);
  return j[key].get<std::string>();
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServeError& e) {
      send_error(res, e.http_status(), e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "INTERNAL", e.what());
    }
  };
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<ChatService> service, std::string static_dir)
    : service_(std::move(service)), server_(std::make_unique<httplib::Server>()) {
  auto svc = service_;
  const bool have_static = !static_dir.empty() && server_->set_mount_point("/static", static_dir);

  server_->Get("/health", guarded([svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"sessions", svc->session_count()}});
  }));

  server_->Get("/images", guarded([svc, have_static, static_dir](const httplib::Request&, httplib::Response& res) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& id : svc->image_ids()) {
      nlohmann::json item = {{"id", id}};
      if (have_static) {
        for (const char* ext : {".jpg", ".png"}) {
          if (std::filesystem::exists(std::filesystem::path(static_dir) / (id + ext))) {
            item["thumbnail"] = "/static/" + id + ext;
            break;
          }
        }
      }
      images.push_back(std::move(item));
    }
    send_json(res, 200, {{"images", images}});
  }));

  server_->Post("/session", guarded([svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    std::optional<std::string> image;
    if (body.contains("image_id") && !body["image_id"].is_null()) image = required_string(body, "image_id");
    const auto start = svc->create_session(image, body.value("conditioning", nlohmann::json()));
    auto out = to_json(start.session);
    out["opening"] = start.opening ? to_json(*start.opening) : nlohmann::json(nullptr);
    send_json(res, 200, out);
  }));

  server_->Get(R"(/session/([0-9a-f]+))", guarded([svc](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, to_json(svc->session(req.matches[1])));
  }));

  server_->Post("/chat", guarded([svc](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto r = svc->chat(required_string(body, "session_id"), required_string(body, "message"));
    send_json(res, 200, to_json(r));
  }));

  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "NOT_FOUND" : "HTTP_ERROR", "no such route");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw std::runtime_error("cannot bind " + host);
    return p;
  }
  if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_) server_->stop();
}

bool HttpServer::running() const { return server_->is_running(); }

}  // namespace mmb::serve
