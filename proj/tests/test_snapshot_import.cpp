#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <fstream>
#include <sstream>

#include "irec/error.hpp"
#include "irec/graph_store.hpp"
#include "support/generators.hpp"

using namespace irec;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "irec-tests";
  fs::create_directories(dir);
  return dir / name;
}

GraphStore::Options opts(std::shared_ptr<const EmbeddingProvider> e = nullptr, std::uint64_t seed = 5) {
  GraphStore::Options o;
  o.id_seed = seed;
  o.tag_embedder = std::move(e);
  return o;
}

void populate(GraphStore& store, testing::Rng& rng, const EmbeddingProvider& embedder) {
  std::vector<std::string> tags;
  for (int i = 0; i < 20; ++i) {
    std::optional<std::string> parent;
    if (!tags.empty() && rng.coin(0.7)) parent = rng.pick(tags);
    tags.push_back(store.upsert_tag("t" + std::to_string(i), parent).id);
  }
  for (int i = 0; i < 50; ++i) {
    std::set<std::string> ts;
    for (int k = 0; k < 3; ++k) if (rng.coin()) ts.insert(rng.pick(tags));
    const auto card = store.create_card(rng.sentence(3, 10), rng.sentence(0, 20), ts, 1000 + i);
    if (rng.coin(0.8)) {
      store.set_card_embedding(card.id, embedder.embed(card.problem_text), store.card_revision(card.id));
    }
    for (int a = static_cast<int>(rng.integer(0, 3)); a > 0; --a) store.record_access(card.id, 2000 + a);
  }
}

ErrorCode load_error(const std::string& text) {
  const auto path = temp_path("bad.json");
  std::ofstream(path) << text;
  GraphStore store;
  try {
    store.load_snapshot(path);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("load should have failed");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("snapshot round trip is lossless") {
  auto embedder = std::make_shared<HashingEmbedder>(32);
  testing::Rng rng(51);
  GraphStore store(opts(embedder));
  populate(store, rng, *embedder);
  const auto path = temp_path("roundtrip.json");
  store.save_snapshot(path);

  GraphStore restored(opts(embedder));
  restored.load_snapshot(path);
  CHECK(restored.snapshot() == store.snapshot());
  CHECK(snapshot_to_json(restored.snapshot()) == snapshot_to_json(store.snapshot()));
  const auto q = embedder->embed("integral");
  CHECK(restored.vector_search(q, 10) == store.vector_search(q, 10));
  CHECK(restored.fulltext_search("integral x", 10) == store.fulltext_search("integral x", 10));
}

TEST_CASE("corrupt snapshots are rejected") {
  CHECK(load_error("{not json") == ErrorCode::CorruptSnapshot);
  CHECK(load_error(R"({"version": 99, "cards": [], "tags": [], "edges": []})") == ErrorCode::VersionMismatch);
  CHECK(load_error(R"({"version": 1, "cards": [], "tags": [
      {"id": "a", "name": "A", "parent_id": "b", "level": 1, "embedding": null},
      {"id": "b", "name": "B", "parent_id": "a", "level": 1, "embedding": null}], "edges": []})") ==
        ErrorCode::CorruptSnapshot);
  CHECK(load_error(R"({"version": 1, "cards": [], "tags": [], "edges": [{"card_id": "x", "tag_id": "y"}]})") ==
        ErrorCode::CorruptSnapshot);
  GraphStore store;
  try {
    store.load_snapshot(temp_path("does-not-exist.json"));
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
}

TEST_CASE("restore rejects a parent cycle") {
  GraphSnapshot snap;
  snap.tags.push_back({"a", "A", "b", 1, std::nullopt});
  snap.tags.push_back({"b", "B", "a", 1, std::nullopt});
  GraphStore store;
  try {
    store.restore(snap);
    FAIL("expected CycleDetected");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CycleDetected);
  }
  CHECK(store.tag_count() == 0);
}

namespace {

std::string corpus(std::size_t n, std::uint64_t seed) {
  testing::Rng rng(seed);
  std::ostringstream out;
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json rec = {{"problem", rng.sentence(3, 12)},
                          {"insight", rng.sentence(5, 25)},
                          {"tags", {std::string("Math/") + (rng.coin() ? "Calculus" : "Algebra")}},
                          {"created_at", 1000 + static_cast<std::int64_t>(i)}};
    out << rec.dump() << "\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("bulk import yields identical graphs for any parallelism") {
  auto embedder = std::make_shared<HashingEmbedder>(64);
  const auto text = corpus(1200, 61);
  std::optional<std::string> reference;
  for (std::size_t k : {1u, 2u, 8u}) {
    GraphStore store(opts(embedder, 77));
    std::istringstream in(text);
    std::size_t last = 0;
    bool monotone = true;
    const auto report = store.bulk_import(
        in, k,
        [&](std::size_t done, std::size_t) {
          monotone = monotone && done == last + 1;
          last = done;
        },
        embedder.get(), 5000);
    CHECK(report.imported == 1200);
    CHECK(report.failed == 0);
    CHECK(monotone);
    CHECK(last == 1200);
    CHECK(store.tag_count() == 3);
    const auto json = snapshot_to_json(store.snapshot());
    if (!reference) reference = json;
    CHECK(json == *reference);
  }
}

TEST_CASE("bulk import counts malformed records without aborting") {
  auto text = corpus(7, 62);
  text += "{broken json\n";
  text += R"({"problem": 5, "insight": "x"})" "\n";
  text += R"({"insight": "missing problem"})" "\n";
  GraphStore store(opts());
  std::istringstream in(text);
  const auto report = store.bulk_import(in, 2, nullptr, nullptr, 0);
  CHECK(report.imported == 7);
  CHECK(report.failed == 3);
  REQUIRE(report.errors.size() == 3);
  CHECK(report.errors[0].rfind("line 8:", 0) == 0);
  CHECK(store.card_count() == 7);
}
