#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace irec {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Incrementally maintained inverted index scored with Okapi BM25 using the
// non-negative idf ln(1 + (N - df + 0.5) / (df + 0.5)). Documents are
// addressed by dense ordinals owned by the caller.
class FulltextIndex {
 public:
  using DocId = std::uint32_t;

  explicit FulltextIndex(Bm25Params params = {}) : params_(params) {}

  // Indexes `text` under `doc`, replacing any previous content.
  void upsert(DocId doc, std::string_view text);
  void remove(DocId doc);
  void clear();

  // Every document sharing at least one term with the query, with its BM25
  // score, in ascending doc order. Query terms are deduplicated.
  std::vector<std::pair<DocId, double>> score_all(std::string_view query) const;

  std::size_t doc_count() const noexcept { return doc_len_.size(); }
  const Bm25Params& params() const noexcept { return params_; }

 private:
  struct Posting {
    DocId doc;
    std::uint32_t tf;
  };

  Bm25Params params_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<DocId, std::vector<std::string>> doc_terms_;
  std::unordered_map<DocId, std::uint32_t> doc_len_;
  std::uint64_t total_len_ = 0;
};

}  // namespace irec
