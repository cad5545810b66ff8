#include "irec/fulltext_index.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "irec/text.hpp"

namespace irec {

void FulltextIndex::upsert(DocId doc, std::string_view text) {
  remove(doc);
  const auto tokens = tokenize(text);
  std::map<std::string, std::uint32_t> tf;
  for (const auto& t : tokens) ++tf[t];

  std::vector<std::string> terms;
  terms.reserve(tf.size());
  for (auto& [term, count] : tf) {
    auto& list = postings_[term];
    auto pos = std::lower_bound(list.begin(), list.end(), doc,
                                [](const Posting& p, DocId d) { return p.doc < d; });
    list.insert(pos, Posting{doc, count});
    terms.push_back(term);
  }
  doc_terms_[doc] = std::move(terms);
  doc_len_[doc] = static_cast<std::uint32_t>(tokens.size());
  total_len_ += tokens.size();
}

void FulltextIndex::remove(DocId doc) {
  auto it = doc_terms_.find(doc);
  if (it == doc_terms_.end()) return;
  for (const auto& term : it->second) {
    auto pit = postings_.find(term);
    if (pit == postings_.end()) continue;
    auto& list = pit->second;
    std::erase_if(list, [doc](const Posting& p) { return p.doc == doc; });
    if (list.empty()) postings_.erase(pit);
  }
  total_len_ -= doc_len_[doc];
  doc_len_.erase(doc);
  doc_terms_.erase(it);
}

void FulltextIndex::clear() {
  postings_.clear();
  doc_terms_.clear();
  doc_len_.clear();
  total_len_ = 0;
}

std::vector<std::pair<FulltextIndex::DocId, double>> FulltextIndex::score_all(
    std::string_view query) const {
  auto terms = tokenize(query);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

  const double n = static_cast<double>(doc_len_.size());
  if (n == 0.0) return {};
  const double avgdl = static_cast<double>(total_len_) / n;

  std::map<DocId, double> scores;
  for (const auto& term : terms) {
    auto pit = postings_.find(term);
    if (pit == postings_.end()) continue;
    const double df = static_cast<double>(pit->second.size());
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (const auto& p : pit->second) {
      const double tf = p.tf;
      const double dl = doc_len_.at(p.doc);
      const double norm = params_.k1 * (1.0 - params_.b + params_.b * dl / avgdl);
      scores[p.doc] += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
  }
  return {scores.begin(), scores.end()};
}

}  // namespace irec
