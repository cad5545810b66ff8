#include <doctest.h>
#include <httplib.h>

#include <filesystem>
#include <thread>

#include "irec/http_server.hpp"
#include "support/scenario.hpp"

using namespace irec;
using nlohmann::json;

namespace {

AppConfig scenario_config(const std::filesystem::path& store_path) {
  AppConfig c;
  c.store_path = store_path.string();
  c.id_seed = 7;
  c.llm.fixtures = testing::fixture_path("scenario").string();
  return c;
}

Clock fixed_clock() {
  return [] { return testing::kEpoch; };
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

struct Served {
  ApiService service;
  HttpServer server{service};
  int port = -1;
  std::thread thread;

  explicit Served(AppConfig config) : service(std::move(config), fixed_clock()) {
    port = server.bind("127.0.0.1", 0);
    thread = std::thread([this] { server.listen(); });
  }
  ~Served() {
    server.stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

json post(httplib::Client& c, const std::string& path, const json& body, int expect = 200) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

json get(httplib::Client& c, const std::string& path, int expect = 200) {
  auto res = c.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

}  // namespace

TEST_CASE("error codes map to statuses") {
  CHECK(http_status(ErrorCode::UnknownCard) == 404);
  CHECK(http_status(ErrorCode::UnknownSession) == 404);
  CHECK(http_status(ErrorCode::UnknownDecision) == 404);
  CHECK(http_status(ErrorCode::AlreadyConfirmed) == 409);
  CHECK(http_status(ErrorCode::LlmUnavailable) == 503);
  CHECK(http_status(ErrorCode::MalformedLlmResponse) == 502);
  CHECK(http_status(ErrorCode::EmptyQuery) == 400);
  CHECK(http_status(ErrorCode::CorruptSnapshot) == 500);
  const auto body = error_body(Error(ErrorCode::EmptyNote, "x"));
  CHECK(body.at("error").at("code") == "EmptyNote");
}

TEST_CASE("target splitting and addresses") {
  const auto [parts, query] = split_target("/sessions/q-1/events?from=3&wait_ms=10&note=a%20b");
  CHECK(parts == std::vector<std::string>{"sessions", "q-1", "events"});
  CHECK(query.at("from") == "3");
  CHECK(query.at("note") == "a b");
  CHECK(parse_address("http://127.0.0.1:9000") == std::pair<std::string, int>{"127.0.0.1", 9000});
  CHECK(parse_address("localhost:80") == std::pair<std::string, int>{"localhost", 80});
  CHECK_THROWS_AS(parse_address("nohost"), Error);
}

TEST_CASE("in-process dispatch rejects bad requests") {
  ApiService api(scenario_config(""), fixed_clock());
  CHECK(api.handle("POST", "/query", {{"query", " "}}).status == 400);
  CHECK(api.handle("POST", "/query", {{"query", "x"}, {"mode", "cram"}}).status == 400);
  CHECK(api.handle("POST", "/query", json::object()).status == 400);
  CHECK(api.handle("GET", "/cards/none", nullptr).status == 404);
  CHECK(api.handle("GET", "/sessions/q-1", nullptr).status == 404);
  CHECK(api.handle("POST", "/decisions/dec-1", {{"action", "accept"}}).status == 404);
  CHECK(api.handle("DELETE", "/cards", nullptr).status == 404);
  CHECK(api.handle("POST", "/insights", {{"note", ""}}).status == 400);
  CHECK(api.handle("GET", "/health", nullptr).body.at("status") == "ok");
}

TEST_CASE("end to end over HTTP") {
  TempDir dir("irec_http_e2e");
  const auto store_path = dir.path / "store.json";
  std::string card_id, session_id;
  {
    Served s(scenario_config(store_path));
    REQUIRE(s.port > 0);
    auto c = s.client();

    const auto captured = post(c, "/insights", {{"note", testing::read_fixture("scenario/note.txt")}});
    card_id = captured.at("card").at("id");
    CHECK(captured.at("problem_incomplete") == false);
    REQUIRE(captured.at("decisions").size() == 1);
    const std::string dec = captured.at("decisions")[0].at("id");
    CHECK(get(c, "/decisions?pending=true").at("decisions").size() == 1);
    const auto accepted = post(c, "/decisions/" + dec, {{"action", "accept"}});
    CHECK(accepted.at("decision").at("state") == "accepted");
    post(c, "/decisions/" + dec, {{"action", "veto"}}, 409);

    const auto report =
        post(c, "/import", {{"records", testing::read_fixture("scenario/distractor.jsonl")}, {"parallelism", 2}});
    CHECK(report.at("imported") == 1);
    s.service.workflow().wait_idle();
    const auto stats = get(c, "/stats");
    CHECK(stats.at("cards") == 2);
    CHECK(stats.at("embedded_cards") == 2);
    CHECK(stats.at("pending_decisions") == 0);

    session_id = post(c, "/query", {{"query", testing::kScenarioQuery}}).at("session_id");

    // Server-sent events until the terminal frame.
    std::string stream;
    auto res = c.Get("/sessions/" + session_id + "/events", [&](const char* data, std::size_t len) {
      stream.append(data, len);
      return true;
    });
    REQUIRE(res);
    CHECK(res->get_header_value("Content-Type").find("text/event-stream") != std::string::npos);
    for (const char* kind :
         {"preliminary_results", "tags_resolved", "reranked_results", "assessments_ready", "final_results"}) {
      CHECK(stream.find(std::string("event: ") + kind) != std::string::npos);
    }

    // Polling returns the same events.
    const auto polled = get(c, "/sessions/" + session_id + "/events?from=0&wait_ms=100");
    CHECK(polled.at("terminal") == true);
    REQUIRE(polled.at("events").size() == 5);
    const auto& final_results = polled.at("events")[4].at("payload").at("results");
    REQUIRE(final_results.size() == 1);
    CHECK(final_results[0].at("card_id") == card_id);
    CHECK(get(c, "/sessions/" + session_id + "/events?from=5").at("events").empty());
    CHECK(get(c, "/sessions/" + session_id).at("state") == "complete");
    CHECK(get(c, "/sessions/" + session_id + "/log").at("steps").size() == 8);

    const auto opened = post(c, "/sessions/" + session_id + "/open", {{"card_id", card_id}});
    CHECK(opened.at("card").at("access_count") == 1);

    const auto inquiry = post(c, "/inquiry", {{"card_id", card_id}, {"problem_id", session_id}});
    const std::string iid = inquiry.at("inquiry_id");
    CHECK(inquiry.at("turns").size() == 1);
    const auto turn = post(c, "/inquiry/" + iid + "/turns", {{"text", "try u = x²"}});
    CHECK(turn.at("turns").size() == 3);
    CHECK_FALSE(turn.at("reply").get<std::string>().empty());
    CHECK(get(c, "/inquiry/" + iid).at("turns").size() == 3);

    const auto appended = post(c, "/cards/" + card_id + "/insights", {{"text", "Works with sin too."}});
    CHECK(appended.at("card").at("insight").get<std::string>().ends_with("Works with sin too."));

    auto bad = c.Post("/query", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    s.service.workflow().wait_idle();
  }

  // Everything survives a restart.
  ApiService reloaded(scenario_config(store_path), fixed_clock());
  const auto card = reloaded.handle("GET", "/cards/" + card_id, nullptr);
  CHECK(card.status == 200);
  CHECK(card.body.at("access_count") == 1);
  CHECK(card.body.at("tags").size() == 1);
  CHECK(reloaded.handle("GET", "/decisions", nullptr).body.at("decisions").size() == 1);
  CHECK(reloaded.handle("GET", "/stats", nullptr).body.at("cards") == 2);
}
