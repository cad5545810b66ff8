#include <doctest.h>

#include <cmath>

#include "irec/tag_mapper.hpp"
#include "support/expect.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace irec;
using irec::testing::error_code_of;

namespace {

std::vector<double> values(const EmbeddingVector& v) { return {v.values().begin(), v.values().end()}; }

struct Fixture {
  std::shared_ptr<HashingEmbedder> embedder = std::make_shared<HashingEmbedder>();
  std::shared_ptr<StubLlm> stub = std::make_shared<StubLlm>();
  GraphStore store{[&] {
    GraphStore::Options o;
    o.id_seed = 11;
    o.tag_embedder = embedder;
    return o;
  }()};
  LlmGateway gateway{stub, "tutor"};
  TagMapper mapper{store, gateway, embedder};

  Tag calculus, integration, substitution, linalg, eigen;
  ProblemCard card;

  Fixture() {
    calculus = store.upsert_tag("Calculus", std::nullopt);
    integration = store.upsert_tag("Integration", calculus.id);
    substitution = store.upsert_tag("Substitution", integration.id);
    linalg = store.upsert_tag("Linear algebra", std::nullopt);
    eigen = store.upsert_tag("Eigenvalues", linalg.id);
    card = store.create_card("Evaluate ∫ x(x²+1)³ dx", "let u = x²+1", {}, 0);
  }

  TagSuggestion suggestion(std::string name, std::string context) const {
    return {std::move(name), card.id, std::move(context)};
  }
};

}  // namespace

TEST_CASE("candidate and fallback scores follow the formulas") {
  testing::Rng rng(91);
  for (int i = 0; i < 10000; ++i) {
    std::vector<CandidateScore> cands(rng.integer(1, 8));
    for (std::size_t j = 0; j < cands.size(); ++j) {
      cands[j].tag_id = "t" + std::to_string(j);
      cands[j].score_cand = std::round(rng.uniform(-1, 1) * 20) / 20;
      cands[j].level = static_cast<std::uint32_t>(rng.integer(0, 5));
      CHECK(std::abs(fallback_score(cands[j]) - oracle::fallback(cands[j].score_cand, cands[j].level)) <= 1e-12);
    }
    double best = -10;
    for (const auto& c : cands) best = std::max(best, oracle::fallback(c.score_cand, c.level));
    const auto d = fallback_select(cands);
    CHECK(d.origin == DecisionOrigin::Fallback);
    REQUIRE(std::holds_alternative<MapTo>(d.outcome));
    const auto& id = std::get<MapTo>(d.outcome).tag_id;
    const auto& chosen = *std::find_if(cands.begin(), cands.end(), [&](const CandidateScore& c) { return c.tag_id == id; });
    CHECK(std::abs(oracle::fallback(chosen.score_cand, chosen.level) - best) <= 1e-12);
  }
  for (std::uint32_t l = 0; l < 20; ++l) CHECK(level_weight(l) == 1.0 / (1 + l));
  CHECK(std::holds_alternative<Rejected>(fallback_select({}).outcome));
  const CandidateScore tie_b{"b", "B", 1, 0.5, 0, 0}, tie_a{"a", "A", 1, 0.5, 0, 0};
  CHECK(std::get<MapTo>(fallback_select({tie_b, tie_a}).outcome).tag_id == "a");
}

TEST_CASE("a shallower candidate beats a stronger but deeper one") {
  CandidateScore deep{"deep", "Deep", 3, 0.8, 0, 0};
  CandidateScore shallow{"shallow", "Shallow", 0, 0.7, 0, 0};
  CHECK(fallback_score(deep) == doctest::Approx(0.635).epsilon(1e-12));
  CHECK(fallback_score(shallow) == doctest::Approx(0.79).epsilon(1e-12));
  CHECK(std::get<MapTo>(fallback_select({deep, shallow}).outcome).tag_id == "shallow");
}

TEST_CASE("prescreen matches the cosine oracle") {
  Fixture fx;
  const auto s = fx.suggestion("integration tricks", "Evaluate ∫ x(x²+1)³ dx by substitution");
  const auto got = fx.mapper.prescreen(s, 10);
  REQUIRE(got.size() == fx.store.tag_count());
  const auto e_new = values(fx.embedder->embed(s.raw_name));
  const auto e_ctx = values(fx.embedder->embed(s.problem_context));
  for (std::size_t i = 0; i < got.size(); ++i) {
    const auto e_tag = values(fx.embedder->embed(fx.store.get_tag(got[i].tag_id).name));
    const double o = oracle::score_cand(oracle::cosine(e_new, e_tag), oracle::cosine(e_ctx, e_tag));
    CHECK(std::abs(got[i].score_cand - o) <= 1e-12);
    if (i) CHECK(got[i - 1].score_cand >= got[i].score_cand);
  }
  CHECK(fx.mapper.prescreen(s, 2).size() == 2);
  const std::set<std::string> scope{fx.eigen.id};
  const auto scoped = fx.mapper.prescreen(s, 10, &scope);
  REQUIRE(scoped.size() == 1);
  CHECK(scoped[0].tag_id == fx.eigen.id);
}

TEST_CASE("one branch-selection call per batch, one precise call per routed suggestion") {
  Fixture fx;
  const std::vector<TagSuggestion> batch{
      fx.suggestion("Substitution", "calculus integral of a composite function"),
      fx.suggestion("Eigenvalues", "linear algebra characteristic polynomial"),
      fx.suggestion("Topology", "open sets and continuity"),
  };
  const auto before = fx.store.snapshot();
  const auto decisions = fx.mapper.map_batch(batch);
  CHECK(fx.stub->call_count("branch_select") == 1);
  CHECK(fx.stub->call_count("precise_select") == 2);
  REQUIRE(decisions.size() == 3);
  CHECK(decisions[0].outcome == MappingOutcome{MapTo{fx.substitution.id}});
  CHECK(decisions[1].outcome == MappingOutcome{MapTo{fx.eigen.id}});
  CHECK(decisions[2].outcome == MappingOutcome{CreateUnder{std::nullopt, "Topology"}});
  for (const auto& d : decisions) {
    CHECK(d.origin == DecisionOrigin::Llm);
    CHECK_FALSE(d.confirmed);
    CHECK(d.state == DecisionState::Pending);
  }
  CHECK(fx.store.snapshot() == before);
  CHECK(fx.mapper.decisions(true).size() == 3);
}

TEST_CASE("an empty hierarchy makes no calls") {
  auto embedder = std::make_shared<HashingEmbedder>();
  auto stub = std::make_shared<StubLlm>();
  GraphStore store;
  LlmGateway gw(stub, "");
  TagMapper mapper(store, gw, embedder);
  const auto card = store.create_card("p", "i", {}, 0);
  const auto d = mapper.map_batch({{"Series", card.id, "p"}});
  CHECK(stub->requests().empty());
  CHECK(d[0].outcome == MappingOutcome{CreateUnder{std::nullopt, "Series"}});
}

TEST_CASE("outages and malformed replies fall back to the scored argmax") {
  Fixture fx;
  const std::vector<TagSuggestion> batch{fx.suggestion("Substitution", "calculus integral")};
  auto check_fallback = [&](const MappingDecision& d) {
    CHECK(d.origin == DecisionOrigin::Fallback);
    const auto expected = fallback_select(fx.mapper.prescreen(batch[0], 5));
    CHECK(d.outcome == expected.outcome);
  };

  fx.stub->set_available(false);
  check_fallback(fx.mapper.map_batch(batch)[0]);
  CHECK(fx.stub->call_count("precise_select") == 0);
  fx.stub->set_available(true);

  fx.stub->add_rule({"branch_select", {"Substitution"}, "{\"items\": 7}", false});
  check_fallback(fx.mapper.map_batch(batch)[0]);
}

TEST_CASE("phase two answers outside the branch are not trusted") {
  Fixture fx;
  const auto s = fx.suggestion("Substitution", "calculus integral");
  fx.stub->add_rule({"precise_select", {}, "{\"action\":\"map\",\"target_id\":\"" + fx.eigen.id + "\"}", false});
  const std::set<std::string> scope{fx.calculus.id, fx.integration.id, fx.substitution.id};
  const auto cands = fx.mapper.prescreen(s, 5, &scope);
  const auto d = fx.mapper.phase2_precise_select(s, fx.calculus.id, cands);
  CHECK(d.origin == DecisionOrigin::Fallback);
  CHECK(d.outcome == fallback_select(cands).outcome);
}

TEST_CASE("phase one drops answers naming unknown branches") {
  Fixture fx;
  fx.stub->add_rule(
      {"branch_select", {}, R"({"items":[{"tag":"substitution","branch_ids":["nope"]}]})", false});
  const auto sel = fx.mapper.phase1_branch_select({fx.suggestion("Substitution", "")}, fx.store.root_tags());
  REQUIRE(sel.size() == 1);
  CHECK_FALSE(sel[0].has_value());
}

TEST_CASE("confirmation applies, modifies or discards") {
  Fixture fx;
  const auto ds = fx.mapper.map_batch({
      fx.suggestion("Substitution", "calculus integral"),
      fx.suggestion("Topology", "open sets"),
      fx.suggestion("Eigenvalues", "linear algebra matrix"),
      fx.suggestion("Eigenvalues", "linear algebra matrix"),
  });

  const auto a = fx.mapper.confirm_decision(ds[0].id, UserAction::Accept);
  CHECK(a.confirmed);
  CHECK(a.state == DecisionState::Accepted);
  CHECK(fx.store.get_card(fx.card.id).tag_ids.contains(fx.substitution.id));

  const auto created = fx.mapper.confirm_decision(ds[1].id, UserAction::Accept);
  REQUIRE(created.applied_tag_id);
  const auto topo = fx.store.get_tag(*created.applied_tag_id);
  CHECK(topo.name == "Topology");
  REQUIRE(topo.parent_id);
  CHECK(fx.store.get_tag(*topo.parent_id).name == "Uncategorized");

  const auto edges = fx.store.edge_count();
  const auto v = fx.mapper.confirm_decision(ds[2].id, UserAction::Veto);
  CHECK(v.state == DecisionState::Vetoed);
  CHECK(fx.store.edge_count() == edges);

  const auto m = fx.mapper.confirm_decision(ds[3].id, UserAction::Modify,
                                            MappingOutcome{CreateUnder{fx.linalg.id, "Spectra"}});
  CHECK(m.state == DecisionState::Modified);
  CHECK(fx.store.get_tag(*m.applied_tag_id).parent_id == fx.linalg.id);

  CHECK(error_code_of([&] { fx.mapper.confirm_decision(ds[0].id, UserAction::Veto); }) ==
        ErrorCode::AlreadyConfirmed);
  CHECK(error_code_of([&] { fx.mapper.confirm_decision("dec-999", UserAction::Accept); }) ==
        ErrorCode::UnknownDecision);
  CHECK(fx.mapper.decisions(true).empty());

  std::vector<std::string> transitions;
  for (const auto& e : fx.mapper.log()) transitions.push_back(e.transition);
  CHECK(transitions == std::vector<std::string>{"created", "created", "created", "created", "accept", "accept",
                                                "veto", "modify"});
}

TEST_CASE("decision state survives a save and load") {
  Fixture fx;
  const auto ds = fx.mapper.map_batch({fx.suggestion("Substitution", "calculus"), fx.suggestion("Topology", "")});
  fx.mapper.confirm_decision(ds[0].id, UserAction::Veto);
  const auto state = fx.mapper.save_state();

  TagMapper other(fx.store, fx.gateway, fx.embedder);
  other.load_state(state);
  CHECK(other.save_state() == state);
  CHECK(other.get_decision(ds[1].id).outcome == ds[1].outcome);
  const auto next = other.map_batch({fx.suggestion("Eigenvalues", "linear algebra")});
  CHECK(next[0].id == "dec-3");
  CHECK(error_code_of([&] { other.get_decision("dec-77"); }) == ErrorCode::UnknownDecision);
}
