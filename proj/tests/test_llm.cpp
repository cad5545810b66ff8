#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "irec/llm_gateway.hpp"
#include "support/expect.hpp"

using namespace irec;
using irec::testing::error_code_of;
using nlohmann::json;

namespace {

ProblemCard card(std::string problem, std::string insight = "substitute the inner function") {
  ProblemCard c;
  c.id = "c1";
  c.problem_text = std::move(problem);
  c.insight_text = std::move(insight);
  return c;
}

InquirySession session_for(const ProblemCard& c) {
  InquirySession s;
  s.id = "i-1";
  s.current_problem_ref = "q-1";
  s.current_problem_text = "∫ x sin(x²) dx";
  s.recalled_card_id = c.id;
  s.recalled_problem = c.problem_text;
  s.recalled_insight = c.insight_text;
  return s;
}

}  // namespace

TEST_CASE("stub rules, digests and defaults") {
  auto stub = std::make_shared<StubLlm>();
  const json req = {{"task", "assess_similarity"}, {"new_problem", "a"}, {"card_problem", "b"}};
  stub->add_fixture(StubLlm::digest(req), R"({"score":2,"rationale":"fixture"})");
  stub->add_rule({"assess_similarity", {"zzz"}, R"({"score":1,"rationale":"rule"})", false});
  stub->add_rule({"", {"outage"}, "", true});

  CHECK(json::parse(stub->complete(req)).at("rationale") == "fixture");
  CHECK(json::parse(stub->complete({{"task", "assess_similarity"}, {"new_problem", "zzz"}, {"card_problem", "q"}}))
            .at("rationale") == "rule");
  CHECK(error_code_of([&] { stub->complete({{"task", "parse_insight"}, {"note", "outage"}}); }) ==
        ErrorCode::LlmUnavailable);
  CHECK(stub->call_count("assess_similarity") == 2);
  CHECK(stub->requests().size() == 3);
  stub->set_available(false);
  CHECK(error_code_of([&] { stub->complete(req); }) == ErrorCode::LlmUnavailable);
}

TEST_CASE("stub loads a fixture directory") {
  const auto dir = std::filesystem::temp_directory_path() / "irec_stub_fixtures";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const json req = {{"task", "guided_inquiry"}, {"x", 1}};
  std::ofstream(dir / (StubLlm::digest(req) + ".json")) << R"({"reply":"from disk"})";
  std::ofstream(dir / "rules.json") << R"([{"task":"parse_insight","contains":["hello"],
      "response":{"problem":"P","insight":"I","tags":["t"]}}])";
  StubLlm stub(dir);
  CHECK(json::parse(stub.complete(req)).at("reply") == "from disk");
  CHECK(json::parse(stub.complete({{"task", "parse_insight"}, {"note", "hello"}})).at("problem") == "P");
  CHECK(error_code_of([&] { StubLlm bad(dir / "missing"); }) == ErrorCode::InvalidConfig);
  std::filesystem::remove_all(dir);
}

TEST_CASE("insight parsing") {
  auto stub = std::make_shared<StubLlm>();
  LlmGateway gw(stub, "tutor");
  const auto p = gw.parse_insight_note("Integrate x e^x ||| use parts with u = x #ibp ||| Integration/Parts, parts");
  CHECK(p.problem == "Integrate x e^x");
  CHECK(p.insight == "use parts with u = x #ibp");
  CHECK(p.suggested_tags == std::vector<std::string>{"Integration/Parts", "parts", "ibp"});
  CHECK_FALSE(p.problem_incomplete);
  CHECK(error_code_of([&] { gw.parse_insight_note("  \n "); }) == ErrorCode::EmptyNote);

  stub->add_rule({"parse_insight", {"garbled"}, "not json", false});
  const auto d = gw.parse_insight_note("garbled first line\nsecond line");
  CHECK(d.problem == "garbled first line");
  CHECK(d.insight == "garbled first line\nsecond line");
  CHECK(d.problem_incomplete);
  CHECK(d.suggested_tags.empty());

  stub->set_available(false);
  const auto off = gw.parse_insight_note("outage note");
  CHECK(off.problem_incomplete);
  CHECK(off.insight == "outage note");
}

TEST_CASE("similarity assessment validates replies") {
  auto stub = std::make_shared<StubLlm>();
  LlmGateway gw(stub, "tutor");
  const auto c = card("integrate x cos x");
  CHECK(gw.assess_similarity("integrate x cos x", c).score == 0);
  CHECK(gw.assess_similarity("eigenvalues of a rotation matrix", c).score == 3);
  const auto req = stub->requests().back();
  CHECK(req.at("rubric") == std::string(kSimilarityRubric));

  stub->add_rule({"assess_similarity", {"range"}, R"({"score":4})", false});
  stub->add_rule({"assess_similarity", {"float"}, R"({"score":1.5})", false});
  stub->add_rule({"assess_similarity", {"array"}, "[1]", false});
  for (const char* q : {"range", "float", "array"}) {
    CHECK(error_code_of([&] { gw.assess_similarity(q, c); }) == ErrorCode::MalformedLlmResponse);
  }
  CHECK(error_code_of([&] { gw.assess_similarity(" ", c); }) == ErrorCode::InvalidArgument);
  stub->set_available(false);
  CHECK(error_code_of([&] { gw.assess_similarity("x", c); }) == ErrorCode::LlmUnavailable);
}

TEST_CASE("filter levels") {
  CHECK(parse_filter_level("STRICT").threshold == 2);
  CHECK(parse_filter_level("loose").threshold == 3);
  CHECK(error_code_of([] { parse_filter_level("medium"); }) == ErrorCode::InvalidArgument);

  std::vector<AssessedResult> in(5);
  for (std::size_t i = 0; i < 4; ++i) {
    in[i].result.card_id = "c" + std::to_string(i);
    in[i].assessment = SimilarityAssessment{static_cast<int>(i), ""};
  }
  in[4].result.card_id = "c4";
  const auto strict = filter_by_level(in, FilterLevel::strict());
  REQUIRE(strict.size() == 4);
  CHECK(strict[3].result.card_id == "c4");
  CHECK(filter_by_level(in, FilterLevel::loose()).size() == 5);
  in.pop_back();
  for (auto& a : in) a.assessment->score = 3;
  CHECK(filter_by_level(in, FilterLevel::strict()).empty());
}

TEST_CASE("inquiry turns carry both references") {
  auto stub = std::make_shared<StubLlm>();
  LlmGateway gw(stub, "Never give the answer.");
  const auto c = card("integrate x(x²+1)³");
  auto s = session_for(c);
  const auto open = gw.inquiry_turn(s, std::nullopt);
  CHECK(open.role == InquiryRole::Tutor);
  CHECK(open.text.find("integrate x(x²+1)³") != std::string::npos);
  CHECK(open.current_problem_ref == "q-1");
  CHECK(open.recalled_card_id == "c1");
  CHECK(stub->requests().back().at("system") == "Never give the answer.");

  gw.inquiry_turn(s, std::string("maybe u = x²"));
  REQUIRE(s.turns.size() == 3);
  CHECK(s.turns[1].role == InquiryRole::User);
  CHECK(stub->requests().back().at("history").size() == 2);

  CHECK(error_code_of([&] { gw.inquiry_turn(s, std::nullopt); }) == ErrorCode::InvalidArgument);
  auto fresh = session_for(c);
  CHECK(error_code_of([&] { gw.inquiry_turn(fresh, std::string("hi")); }) == ErrorCode::InvalidArgument);
  fresh.recalled_card_id.clear();
  CHECK(error_code_of([&] { gw.inquiry_turn(fresh, std::nullopt); }) == ErrorCode::InvalidArgument);

  stub->set_available(false);
  const auto before = s.turns;
  CHECK(error_code_of([&] { gw.inquiry_turn(s, std::string("still there?")); }) == ErrorCode::LlmUnavailable);
  CHECK(s.turns.size() == before.size());
}

TEST_CASE("client factory") {
  LlmConfig cfg;
  CHECK(std::dynamic_pointer_cast<StubLlm>(make_llm_client(cfg)) != nullptr);
  cfg.provider = "external";
  cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  cfg.timeout_s = 1;
  auto http = make_llm_client(cfg);
  CHECK(error_code_of([&] { http->complete({{"task", "x"}}); }) == ErrorCode::LlmUnavailable);
  cfg.provider = "oracle";
  CHECK(error_code_of([&] { make_llm_client(cfg); }) == ErrorCode::InvalidConfig);
}
