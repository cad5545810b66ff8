// irec: command-line front end. Runs the engine in-process by default, or
// talks to a running `irec serve` when api.address is configured.

#include <httplib.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "irec/api.hpp"
#include "irec/error.hpp"
#include "irec/http_server.hpp"

using nlohmann::json;
using namespace irec;

namespace {

enum Exit { kOk = 0, kFailure = 1, kParseFailure = 2, kSessionError = 3 };

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ApiResponse call(const std::string& method, const std::string& target, const json& body) = 0;
};

class Embedded final : public Backend {
 public:
  explicit Embedded(ApiService& service) : service_(service) {}
  ApiResponse call(const std::string& method, const std::string& target, const json& body) override {
    return service_.handle(method, target, body);
  }

 private:
  ApiService& service_;
};

class Remote final : public Backend {
 public:
  explicit Remote(const std::string& address) {
    const auto [host, port] = parse_address(address);
    client_ = std::make_unique<httplib::Client>(host, port);
    client_->set_read_timeout(std::chrono::seconds(120));
  }
  ApiResponse call(const std::string& method, const std::string& target, const json& body) override {
    httplib::Result res = method == "GET" ? client_->Get(target, {{"Accept", "application/json"}})
                                          : client_->Post(target, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::IoError, "cannot reach server: " + httplib::to_string(res.error()));
    json parsed;
    try {
      parsed = json::parse(res->body);
    } catch (const json::parse_error&) {
      parsed = {{"error", {{"code", "Internal"}, {"message", res->body}}}};
    }
    return {res->status, parsed};
  }

 private:
  std::unique_ptr<httplib::Client> client_;
};

std::string read_all(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::string error_message(const ApiResponse& r) {
  if (r.body.contains("error")) return r.body["error"].value("message", r.body.dump());
  return r.body.dump();
}

std::string fixed4(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

std::string describe(const json& outcome) {
  const auto action = outcome.value("action", std::string{});
  if (action == "map") return "map to " + outcome.value("target_id", std::string{});
  if (action == "create") {
    const auto& parent = outcome["parent_id"];
    return "create \"" + outcome.value("name", std::string{}) + "\" under " +
           (parent.is_null() ? std::string("Uncategorized") : parent.get<std::string>());
  }
  return "reject";
}

void print_decision(const json& d) {
  std::cout << "  " << d["id"].get<std::string>() << "  \"" << d["suggestion"]["tag"].get<std::string>()
            << "\" -> " << describe(d["outcome"]) << "  [" << d["origin"].get<std::string>() << ", "
            << d["state"].get<std::string>() << "]\n";
}

void print_results(const json& results) {
  if (results.empty()) {
    std::cout << "no results (provide-nothing)\n";
    return;
  }
  int rank = 1;
  for (const auto& r : results) {
    std::cout << rank++ << ". " << r["card_id"].get<std::string>() << "  S=" << fixed4(r["final_score"].get<double>())
              << "  R=" << fixed4(r["relevance"].get<double>()) << " A=" << fixed4(r["access"].get<double>())
              << " T=" << fixed4(r["temporal"].get<double>()) << " D=" << fixed4(r["diversity"].get<double>());
    if (r.contains("similarity")) {
      std::cout << "  similarity=" << (r["similarity"].is_null() ? std::string("unassessed")
                                                                : std::to_string(r["similarity"].get<int>()));
    }
    std::cout << "\n   problem: " << r.value("problem", std::string{}) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"irec: capture problem-solving insights and recall them when a related problem appears"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::int64_t> epoch;
  bool verbose = false;
  app.add_option("--config", config_path, "Config file (default: $IREC_CONFIG)");
  app.add_option("--epoch", epoch, "Fix the clock to this Unix time (reproducible output)");
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  bool as_json = false;

  auto* capture = app.add_subcommand("capture", "Record an insight note (from FILE or stdin)");
  std::string capture_file;
  capture->add_option("file", capture_file, "Note file; stdin when omitted");
  capture->add_flag("--json", as_json, "Print the API payload");

  auto* append = app.add_subcommand("append", "Append an insight to an existing card");
  std::string append_card;
  std::string append_text;
  append->add_option("card_id", append_card)->required();
  append->add_option("text", append_text, "Insight text; stdin when omitted");
  append->add_flag("--json", as_json, "Print the API payload");

  auto* query = app.add_subcommand("query", "Recall insights for a problem");
  std::string query_text;
  std::string mode = "balanced";
  std::string filter = "strict";
  std::optional<std::string> open_card;
  bool show_log = false;
  query->add_option("text", query_text, "Problem or query text")->required();
  query->add_option("--mode", mode, "learning | review | balanced")->capture_default_str();
  query->add_option("--filter", filter, "strict | loose")->capture_default_str();
  query->add_option("--open", open_card, "Open this result afterwards");
  query->add_flag("--log", show_log, "Print the stage timings to stderr");
  query->add_flag("--json", as_json, "Print the final results payload only");

  auto* import = app.add_subcommand("import", "Bulk import cards from a JSONL file");
  std::string import_path;
  std::size_t parallelism = std::max(1u, std::thread::hardware_concurrency());
  import->add_option("path", import_path)->required();
  import->add_option("--parallelism", parallelism, "Worker threads")->check(CLI::PositiveNumber);
  import->add_flag("--json", as_json, "Print the report as JSON");

  auto* decisions = app.add_subcommand("decisions", "Review tag-mapping decisions");
  decisions->require_subcommand(1);
  auto* d_list = decisions->add_subcommand("list", "List decisions (pending only by default)");
  bool list_all = false;
  d_list->add_flag("--all", list_all, "Include confirmed decisions");
  d_list->add_flag("--json", as_json, "Print the API payload");
  std::string decision_id;
  auto* d_accept = decisions->add_subcommand("accept", "Apply a decision as proposed");
  d_accept->add_option("id", decision_id)->required();
  auto* d_veto = decisions->add_subcommand("veto", "Discard a decision");
  d_veto->add_option("id", decision_id)->required();
  auto* d_modify = decisions->add_subcommand("modify", "Apply a different outcome");
  d_modify->add_option("id", decision_id)->required();
  std::optional<std::string> map_to;
  std::optional<std::string> create_name;
  std::optional<std::string> parent_id;
  bool reject = false;
  auto* o_map = d_modify->add_option("--map", map_to, "Existing tag id");
  auto* o_create = d_modify->add_option("--create", create_name, "New tag name");
  d_modify->add_option("--parent", parent_id, "Parent tag id for --create")->needs(o_create);
  auto* o_reject = d_modify->add_flag("--reject", reject, "Attach no tag");
  o_map->excludes(o_create)->excludes(o_reject);
  o_create->excludes(o_reject);
  for (auto* sub : {d_accept, d_veto, d_modify}) sub->add_flag("--json", as_json, "Print the API payload");

  auto* inquire = app.add_subcommand("inquire", "Talk a recalled insight through with the tutor");
  std::string inquire_card;
  std::optional<std::string> inquire_problem;
  std::optional<std::string> inquire_problem_id;
  inquire->add_option("--card", inquire_card, "Recalled card id")->required();
  inquire->add_option("--problem", inquire_problem, "Current problem text");
  inquire->add_option("--problem-id", inquire_problem_id, "Current problem card id");

  auto* stats = app.add_subcommand("stats", "Store statistics");
  stats->add_flag("--json", as_json, "Print the API payload");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  std::string serve_address;
  serve->add_option("--address", serve_address, "host:port (default api.address or 127.0.0.1:8080)");

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("irec");
  spdlog::set_default_logger(logger);
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    auto config = resolve_config(config_path ? std::optional<std::filesystem::path>(*config_path) : std::nullopt);
    Clock clock = system_clock_seconds;
    if (epoch) clock = [t = *epoch] { return t; };

    std::unique_ptr<ApiService> service;
    std::unique_ptr<Backend> backend;
    const bool remote = !config.api_address.empty() && !serve->parsed();
    if (remote) {
      backend = std::make_unique<Remote>(config.api_address);
    } else {
      service = std::make_unique<ApiService>(config, clock);
      backend = std::make_unique<Embedded>(*service);
    }
    auto call = [&](const std::string& method, const std::string& target, const json& body = json()) {
      return backend->call(method, target, body);
    };

    if (serve->parsed()) {
      const auto address = !serve_address.empty()       ? serve_address
                           : !config.api_address.empty() ? config.api_address
                                                         : std::string("127.0.0.1:8080");
      const auto [host, port] = parse_address(address);
      HttpServer server(*service);
      const int bound = server.bind(host, port);
      if (bound < 0) {
        std::cerr << "cannot bind " << address << "\n";
        return kFailure;
      }
      std::cerr << "listening on " << host << ":" << bound << "\n";
      return server.listen() ? kOk : kFailure;
    }

    if (capture->parsed()) {
      std::string note;
      if (capture_file.empty()) {
        note = read_all(std::cin);
      } else {
        std::ifstream in(capture_file);
        if (!in) {
          std::cerr << "cannot read " << capture_file << "\n";
          return kFailure;
        }
        note = read_all(in);
      }
      if (blank(note)) {
        std::cerr << "empty note\n";
        return kParseFailure;
      }
      const auto r = call("POST", "/insights", {{"note", note}});
      if (r.status != 200) {
        std::cerr << error_message(r) << "\n";
        return r.status < 500 ? kParseFailure : kFailure;
      }
      if (as_json) {
        std::cout << r.body.dump(2) << "\n";
      } else {
        std::cout << "card " << r.body["card"]["id"].get<std::string>() << "\n";
        std::cout << "problem: " << r.body["card"]["problem"].get<std::string>()
                  << (r.body["problem_incomplete"].get<bool>() ? "  (incomplete, please edit)" : "") << "\n";
        std::cout << "pending decisions: " << r.body["decisions"].size() << "\n";
        for (const auto& d : r.body["decisions"]) print_decision(d);
      }
      return kOk;
    }

    if (append->parsed()) {
      const auto text = append_text.empty() ? read_all(std::cin) : append_text;
      const auto r = call("POST", "/cards/" + append_card + "/insights", {{"text", text}});
      if (r.status != 200) {
        std::cerr << error_message(r) << "\n";
        return r.status == 400 ? kParseFailure : kFailure;
      }
      if (as_json) std::cout << r.body.dump(2) << "\n";
      else std::cout << "card " << append_card << " updated\n";
      return kOk;
    }

    if (query->parsed()) {
      const auto submitted = call("POST", "/query", {{"query", query_text}, {"mode", mode}, {"filter_level", filter}});
      if (submitted.status != 200) {
        std::cerr << error_message(submitted) << "\n";
        return kSessionError;
      }
      const auto session_id = submitted.body["session_id"].get<std::string>();
      std::uint64_t next = 0;
      json final_event;
      while (final_event.is_null()) {
        const auto r = call("GET", "/sessions/" + session_id + "/events?from=" + std::to_string(next) + "&wait_ms=1000");
        if (r.status != 200) {
          std::cerr << error_message(r) << "\n";
          return kSessionError;
        }
        for (const auto& e : r.body["events"]) {
          next = e["seq"].get<std::uint64_t>() + 1;
          const auto kind = e["kind"].get<std::string>();
          const auto& payload = e["payload"];
          if (kind == "final_results" || kind == "error") {
            final_event = e;
            break;
          }
          if (as_json) continue;
          if (kind == "preliminary_results") {
            std::cerr << "[preliminary] " << payload["results"].size() << " keyword matches\n";
          } else if (kind == "tags_resolved") {
            std::cerr << "[tags] " << payload["entry_tags"].size() << " entry tags\n";
          } else if (kind == "reranked_results") {
            std::cerr << "[reranked] " << payload["results"].size() << " candidates\n";
          } else if (kind == "assessments_ready") {
            std::cerr << "[assessed] " << payload["assessments"].size() << " results\n";
          }
        }
      }
      if (show_log) {
        const auto log = call("GET", "/sessions/" + session_id + "/log");
        for (const auto& s : log.body["steps"]) {
          std::cerr << "  " << std::left << std::setw(16) << s["step"].get<std::string>() << fixed4(s["duration_ms"].get<double>())
                    << " ms  " << s["detail"].get<std::string>() << "\n";
        }
      }
      if (final_event["kind"] == "error") {
        std::cerr << "session " << session_id << " failed: " << final_event["payload"].value("message", std::string{}) << "\n";
        return kSessionError;
      }
      const auto& payload = final_event["payload"];
      if (as_json) {
        json out = payload;
        out["session_id"] = session_id;
        std::cout << out.dump(2) << "\n";
      } else {
        print_results(payload["results"]);
      }
      if (open_card) {
        const auto r = call("POST", "/sessions/" + session_id + "/open", {{"card_id", *open_card}});
        if (r.status != 200) {
          std::cerr << error_message(r) << "\n";
          return kFailure;
        }
        if (!as_json) std::cout << "opened " << *open_card << " (access count " << r.body["card"]["access_count"] << ")\n";
      }
      return kOk;
    }

    if (import->parsed()) {
      std::ifstream in(import_path);
      if (!in) {
        std::cerr << "cannot read " << import_path << "\n";
        return kFailure;
      }
      json report;
      if (remote) {
        const auto r = call("POST", "/import", {{"records", read_all(in)}, {"parallelism", parallelism}});
        if (r.status != 200) {
          std::cerr << error_message(r) << "\n";
          return kFailure;
        }
        report = r.body;
      } else {
        const auto rep = service->import_stream(in, parallelism, [](std::size_t done, std::size_t failed) {
          if (done % 250 == 0) std::cerr << "\rprocessed " << done << " (failed " << failed << ")" << std::flush;
        });
        std::cerr << "\r";
        report = {{"imported", rep.imported}, {"failed", rep.failed}, {"elapsed_ms", rep.elapsed.count()},
                  {"errors", rep.errors}};
      }
      if (as_json) {
        std::cout << report.dump(2) << "\n";
      } else {
        std::cout << "imported=" << report["imported"] << " failed=" << report["failed"]
                  << " elapsed_ms=" << report["elapsed_ms"] << "\n";
        for (const auto& e : report["errors"]) std::cout << "  " << e.get<std::string>() << "\n";
      }
      return kOk;
    }

    if (decisions->parsed()) {
      ApiResponse r;
      if (d_list->parsed()) {
        r = call("GET", list_all ? "/decisions" : "/decisions?pending=true");
      } else {
        json body;
        if (d_accept->parsed()) body = {{"action", "accept"}};
        if (d_veto->parsed()) body = {{"action", "veto"}};
        if (d_modify->parsed()) {
          json outcome;
          if (map_to) outcome = {{"action", "map"}, {"target_id", *map_to}};
          else if (create_name) outcome = {{"action", "create"}, {"name", *create_name}, {"parent_id", parent_id ? json(*parent_id) : json(nullptr)}};
          else if (reject) outcome = {{"action", "reject"}};
          else {
            std::cerr << "modify needs --map, --create or --reject\n";
            return kFailure;
          }
          body = {{"action", "modify"}, {"outcome", outcome}};
        }
        r = call("POST", "/decisions/" + decision_id, body);
      }
      if (r.status != 200) {
        std::cerr << error_message(r) << "\n";
        return kFailure;
      }
      if (as_json) {
        std::cout << r.body.dump(2) << "\n";
      } else if (r.body.contains("decisions")) {
        if (r.body["decisions"].empty()) std::cout << "no decisions\n";
        for (const auto& d : r.body["decisions"]) print_decision(d);
      } else {
        print_decision(r.body["decision"]);
      }
      return kOk;
    }

    if (inquire->parsed()) {
      json body = {{"card_id", inquire_card}};
      if (inquire_problem_id) body["problem_id"] = *inquire_problem_id;
      if (inquire_problem) body["problem"] = *inquire_problem;
      auto r = call("POST", "/inquiry", body);
      if (r.status != 200) {
        std::cerr << error_message(r) << "\n";
        return kFailure;
      }
      const auto id = r.body["inquiry_id"].get<std::string>();
      std::cout << "tutor: " << r.body["turns"].back()["text"].get<std::string>() << "\n";
      std::string line;
      while (std::getline(std::cin, line)) {
        if (blank(line)) continue;
        r = call("POST", "/inquiry/" + id + "/turns", {{"text", line}});
        if (r.status != 200) {
          std::cerr << error_message(r) << "\n";
          return kFailure;
        }
        std::cout << "tutor: " << r.body["reply"].get<std::string>() << "\n";
      }
      return kOk;
    }

    if (stats->parsed()) {
      const auto r = call("GET", "/stats");
      if (r.status != 200) {
        std::cerr << error_message(r) << "\n";
        return kFailure;
      }
      if (as_json) {
        std::cout << r.body.dump(2) << "\n";
      } else {
        for (const auto& key : {"cards", "tags", "edges", "embedded_cards", "pending_decisions"}) {
          std::cout << key << ": " << r.body[key] << "\n";
        }
      }
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
