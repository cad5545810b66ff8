#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "irec/fulltext_index.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace irec;

TEST_CASE("bm25 scores match the naive oracle on random corpora") {
  testing::Rng rng(21);
  for (int corpus = 0; corpus < 30; ++corpus) {
    std::vector<std::string> docs;
    FulltextIndex index;
    for (std::uint32_t i = 0; i < 100; ++i) {
      docs.push_back(rng.sentence(1, 25));
      index.upsert(i, docs.back());
    }
    for (int q = 0; q < 10; ++q) {
      const auto query = rng.sentence(1, 5);
      const auto expected = oracle::bm25(docs, query);
      const auto got = index.score_all(query);
      REQUIRE(got.size() == expected.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].first == expected[i].first);
        CHECK(std::abs(got[i].second - expected[i].second) <= 1e-9);
      }
    }
  }
}

TEST_CASE("bm25 tracks upserts and removals") {
  testing::Rng rng(22);
  std::vector<std::string> docs(60);
  FulltextIndex index;
  for (std::uint32_t i = 0; i < docs.size(); ++i) {
    docs[i] = rng.sentence(2, 12);
    index.upsert(i, docs[i]);
  }
  for (int round = 0; round < 200; ++round) {
    const auto i = static_cast<std::uint32_t>(rng.index(docs.size()));
    docs[i] = rng.sentence(2, 12);
    index.upsert(i, docs[i]);
  }
  const auto query = std::string("integral substitution x²");
  const auto expected = oracle::bm25(docs, query);
  const auto got = index.score_all(query);
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i].second - expected[i].second) <= 1e-9);

  index.remove(0);
  for (const auto& [doc, _] : index.score_all(docs[0])) CHECK(doc != 0);
  CHECK(index.doc_count() == docs.size() - 1);
}

TEST_CASE("bm25 query terms are deduplicated and unknown terms ignored") {
  FulltextIndex index;
  index.upsert(0, "alpha beta");
  index.upsert(1, "beta gamma gamma");
  CHECK(index.score_all("beta") == index.score_all("beta beta BETA"));
  CHECK(index.score_all("zeta").empty());
  CHECK(index.score_all("").empty());
}
