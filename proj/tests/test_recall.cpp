#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "irec/error.hpp"
#include "irec/recall.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace irec;

namespace {

ChannelResult random_channel(testing::Rng& rng, Channel ch, std::size_t pool) {
  std::vector<ScoredCard> raw;
  for (std::size_t i = 0; i < pool; ++i) {
    if (rng.coin(0.6)) raw.push_back({"c" + std::to_string(i), rng.uniform(-1, 5)});
  }
  return make_channel_result(ch, std::move(raw));
}

std::vector<ChannelResult> random_channels(testing::Rng& rng) {
  const auto pool = static_cast<std::size_t>(rng.integer(1, 12));
  std::vector<ChannelResult> out;
  for (auto ch : kAllChannels) {
    if (rng.coin(0.85)) out.push_back(random_channel(rng, ch, pool));
  }
  return out;
}

}  // namespace

TEST_CASE("vector normalization: one-sigma points land on the logistic") {
  const double mu = 0.4, sigma = 0.1;
  const std::vector<double> s{mu - sigma, mu, mu + sigma};
  const auto n = normalize_channel(Channel::Vector, s);
  CHECK(n[0] == doctest::Approx(1 / (1 + std::exp(1.0))).epsilon(1e-12));
  CHECK(n[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(n[2] == doctest::Approx(1 / (1 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("normalization degenerate inputs") {
  CHECK(normalize_channel(Channel::Vector, std::vector<double>{0.3}) == std::vector<double>{0.5});
  CHECK(normalize_channel(Channel::Fulltext, std::vector<double>{2, 2, 2}) == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(normalize_channel(Channel::Tag, std::vector<double>{}).empty());
  CHECK(normalize_channel(Channel::Fulltext, std::vector<double>{1, 3, 2}) == std::vector<double>{0, 1, 0.5});
}

TEST_CASE("normalization matches the oracles") {
  testing::Rng rng(71);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> s(rng.integer(0, 30));
    for (auto& x : s) x = rng.uniform(-3, 3);
    const auto v = normalize_channel(Channel::Vector, s);
    const auto f = normalize_channel(Channel::Fulltext, s);
    const auto zo = oracle::zscore_logistic(s);
    const auto mo = oracle::min_max(s);
    for (std::size_t j = 0; j < s.size(); ++j) {
      CHECK(std::abs(v[j] - zo[j]) <= 1e-12);
      CHECK(std::abs(f[j] - mo[j]) <= 1e-12);
      CHECK(v[j] > 0.0);
      CHECK(v[j] < 1.0);
    }
  }
}

TEST_CASE("fuse: permutation invariance, bounds, oracle") {
  testing::Rng rng(72);
  const MergeWeights w;
  for (int i = 0; i < 10000; ++i) {
    auto channels = random_channels(rng);
    const auto base = fuse(channels, w);
    std::shuffle(channels.begin(), channels.end(), rng.engine());
    const auto shuffled = fuse(channels, w);
    REQUIRE(base.size() == shuffled.size());
    std::map<std::string, double> expected;
    std::map<std::string, int> paths;
    for (const auto& c : channels) {
      for (std::size_t j = 0; j < c.raw.size(); ++j) {
        expected[c.raw[j].card_id] += w.weight(c.channel) * c.normalized[j];
        ++paths[c.raw[j].card_id];
      }
    }
    for (std::size_t j = 0; j < base.size(); ++j) {
      CHECK(base[j].card_id == shuffled[j].card_id);
      CHECK(base[j].fused_relevance == shuffled[j].fused_relevance);
      CHECK(base[j].fused_relevance >= 0.0);
      CHECK(base[j].fused_relevance <= 1.0);
      const auto& id = base[j].card_id;
      const double o = std::clamp(expected[id] + 0.1 * (paths[id] - 1), 0.0, 1.0);
      CHECK(std::abs(base[j].fused_relevance - o) <= 1e-12);
      CHECK(base[j].path_set.size() == static_cast<std::size_t>(paths[id]));
    }
  }
}

TEST_CASE("fuse: an extra channel never lowers a card") {
  testing::Rng rng(73);
  const MergeWeights w;
  for (int i = 0; i < 10000; ++i) {
    auto channels = random_channels(rng);
    if (channels.empty()) continue;
    auto& target = channels[rng.index(channels.size())];
    const std::string id = "extra";
    std::vector<ChannelResult> before = channels;
    for (auto& c : before) {
      if (&c - before.data() == &target - channels.data()) continue;
      if (rng.coin()) {
        c.raw.push_back({id, 0.0});
        c.normalized.push_back(rng.uniform(0, 1));
      }
    }
    auto after = before;
    auto& t = after[&target - channels.data()];
    t.raw.push_back({id, 0.0});
    t.normalized.push_back(rng.uniform(0, 1));
    auto score = [&](const std::vector<ChannelResult>& chs) {
      for (const auto& c : fuse(chs, w)) if (c.card_id == id) return c.fused_relevance;
      return 0.0;
    };
    const double lo = score(before), hi = score(after);
    CHECK(hi >= lo);
    if (hi < 1.0 && lo > 0.0) CHECK(hi > lo);
  }
}

TEST_CASE("fuse examples") {
  std::vector<ChannelResult> all;
  for (auto ch : kAllChannels) all.push_back({ch, {{"a", 1.0}}, {1.0}});
  const auto f = fuse(all, MergeWeights{});
  REQUIRE(f.size() == 1);
  CHECK(f[0].fused_relevance == 1.0);
  CHECK(f[0].path_set.size() == 3);

  const auto one = fuse({{Channel::Fulltext, {{"b", 3.0}}, {0.5}}}, MergeWeights{});
  CHECK(one[0].fused_relevance == doctest::Approx(0.15).epsilon(1e-12));

  all.push_back(all.front());
  CHECK_THROWS_AS(fuse(all, MergeWeights{}), Error);
  CHECK_THROWS_AS((MergeWeights{0.5, 0.5, 0.5, 0.1}.validate()), Error);
}

namespace {

struct Fixture {
  std::shared_ptr<HashingEmbedder> embedder = std::make_shared<HashingEmbedder>();
  GraphStore store{[&] {
    GraphStore::Options o;
    o.id_seed = 3;
    o.tag_embedder = embedder;
    return o;
  }()};
};

}  // namespace

TEST_CASE("tag recall decays with depth from the entry tags") {
  Fixture fx;
  auto& store = fx.store;
  const auto integ = store.upsert_tag("Integration", std::nullopt);
  const auto usub = store.upsert_tag("Substitution", integ.id);
  const auto parts = store.upsert_tag("Parts", usub.id);
  const auto c0 = store.create_card("root card", "", {integ.id}, 0);
  const auto c1 = store.create_card("child card", "", {usub.id}, 0);
  const auto c2 = store.create_card("grandchild card", "", {parts.id}, 0);
  store.create_card("untagged", "", {}, 0);

  RecallEngine engine(store, RecallConfig{});
  const auto entries = engine.entry_tags("some integration problem", nullptr);
  REQUIRE(entries.size() == 1);
  CHECK(entries[0].tag_id == integ.id);
  CHECK(entries[0].score == 1.0);
  const auto hits = engine.tag_recall("some integration problem", nullptr, 10);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0] == ScoredCard{c0.id, 1.0});
  CHECK(hits[1].card_id == c1.id);
  CHECK(hits[1].score == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(hits[2].card_id == c2.id);
  CHECK(hits[2].score == doctest::Approx(0.64).epsilon(1e-12));
  CHECK(engine.tag_recall("nothing relevant", nullptr, 10).empty());
}

TEST_CASE("recall runs all channels and records paths") {
  Fixture fx;
  auto& store = fx.store;
  const auto tag = store.upsert_tag("Integration", std::nullopt);
  const auto card = store.create_card("integration by substitution", "u = x²", {tag.id}, 0);
  store.set_card_embedding(card.id, fx.embedder->embed(card.problem_text + "\n" + card.insight_text),
                           store.card_revision(card.id));
  const auto other = store.create_card("matrix eigenvalue", "characteristic polynomial", {}, 0);
  store.set_card_embedding(other.id, fx.embedder->embed(other.problem_text + "\n" + other.insight_text),
                           store.card_revision(other.id));

  RecallEngine engine(store, RecallConfig{});
  const auto q = std::string("integration substitution");
  const auto got = engine.recall(q, fx.embedder->embed(q));
  REQUIRE_FALSE(got.empty());
  CHECK(got[0].card_id == card.id);
  CHECK(got[0].path_set == std::set<Channel>{Channel::Vector, Channel::Fulltext, Channel::Tag});
  const auto no_vec = engine.recall(q, std::nullopt);
  CHECK_FALSE(no_vec[0].path_set.contains(Channel::Vector));
}
