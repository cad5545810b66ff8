#include "irec/http_server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "irec/error.hpp"

namespace irec {

using nlohmann::json;

namespace {

std::string target_of(const httplib::Request& req) {
  std::string target = req.path;
  char sep = '?';
  for (const auto& [k, v] : req.params) {
    target += sep;
    target += httplib::detail::encode_query_param(k) + "=" + httplib::detail::encode_query_param(v);
    sep = '&';
  }
  return target;
}

bool wants_stream(const httplib::Request& req) {
  if (req.has_param("from") || req.has_param("poll")) return false;
  const auto accept = req.get_header_value("Accept");
  return accept.find("application/json") == std::string::npos;
}

}  // namespace

std::pair<std::string, int> parse_address(const std::string& address) {
  std::string rest = address;
  if (const auto scheme = rest.find("://"); scheme != std::string::npos) rest = rest.substr(scheme + 3);
  if (const auto slash = rest.find('/'); slash != std::string::npos) rest = rest.substr(0, slash);
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "address needs host:port: " + address);
  try {
    return {rest.substr(0, colon), std::stoi(rest.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "bad port in " + address);
  }
}

HttpServer::HttpServer(ApiService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (!req.body.empty()) {
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        res.status = 400;
        res.set_content(error_body(Error(ErrorCode::InvalidArgument, e.what())).dump(), "application/json");
        return;
      }
    }
    const auto reply = service_.handle(req.method, target_of(req), body);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };

  server_->Post(".*", handler);
  server_->Get(".*", [this, handler](const httplib::Request& req, httplib::Response& res) {
    static const std::regex events_route("^/sessions/([^/]+)/events$");
    std::smatch m;
    if (!std::regex_match(req.path, m, events_route) || !wants_stream(req)) {
      handler(req, res);
      return;
    }
    const std::string id = m[1];
    try {
      service_.workflow().session(id);
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_body(e).dump(), "application/json");
      return;
    }
    auto next = std::make_shared<std::uint64_t>(0);
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, id, next](std::size_t, httplib::DataSink& sink) {
      const auto events = service_.workflow().events(id, *next, std::chrono::milliseconds(1000));
      for (const auto& e : events) {
        const std::string frame = "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) +
                                  "\ndata: " + to_json(e).dump() + "\n\n";
        if (!sink.write(frame.data(), frame.size())) return false;
        *next = e.seq + 1;
        if (e.terminal()) {
          sink.done();
          return true;
        }
      }
      return true;
    });
  });
  server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    spdlog::error("request failed: {}", what);
    res.status = 500;
    res.set_content(json{{"error", {{"code", "Internal"}, {"message", what}}}}.dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return server_->listen_after_bind(); }

void HttpServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace irec
