#pragma once

#include <memory>
#include <string>

#include "mmb/serve/service.hpp"

namespace httplib {
class Server;
}

namespace mmb::serve {

/// JSON-over-HTTP front end for a ChatService.
///   POST /session  {image_id?, conditioning?: {style?, gender?}}
///   POST /chat     {session_id, message}
///   GET  /session/<id>, GET /images, GET /health
/// Errors come back as {code, message} with a matching status.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<ChatService> service, std::string static_dir = {});
  ~HttpServer();

  /// Binds; port 0 picks a free port. Returns the bound port or throws.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  std::shared_ptr<ChatService> service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace mmb::serve
