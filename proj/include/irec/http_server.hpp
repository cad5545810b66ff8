#pragma once

#include <memory>
#include <string>

#include "irec/api.hpp"

namespace httplib {
class Server;
}

namespace irec {

// Serves ApiService over HTTP. GET /sessions/{id}/events streams
// server-sent events unless the request carries `from` or asks for JSON,
// in which case it answers one poll.
class HttpServer {
 public:
  explicit HttpServer(ApiService& service);
  ~HttpServer();

  // Returns the bound port (an ephemeral one when `port` is 0), or -1.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  bool listen();
  void stop();

 private:
  ApiService& service_;
  std::unique_ptr<httplib::Server> server_;
};

// "host:port" or "http://host:port" -> (host, port).
std::pair<std::string, int> parse_address(const std::string& address);

}  // namespace irec
