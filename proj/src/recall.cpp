#include "irec/recall.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "irec/error.hpp"
#include "irec/text.hpp"

namespace irec {

std::string_view to_string(Channel channel) noexcept {
  switch (channel) {
    case Channel::Vector: return "vector";
    case Channel::Fulltext: return "fulltext";
    case Channel::Tag: return "tag";
  }
  return "unknown";
}

double MergeWeights::weight(Channel channel) const noexcept {
  switch (channel) {
    case Channel::Vector: return vector;
    case Channel::Fulltext: return fulltext;
    case Channel::Tag: return tag;
  }
  return 0.0;
}

void MergeWeights::validate() const {
  if (vector < 0 || fulltext < 0 || tag < 0 || multi_match_bonus_unit < 0) {
    throw Error(ErrorCode::InvalidConfig, "merge weights must be non-negative");
  }
  if (std::abs(vector + fulltext + tag - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidConfig, "merge weights must sum to 1");
  }
}

std::vector<double> normalize_channel(Channel channel, std::span<const double> scores) {
  std::vector<double> out(scores.size(), 0.5);
  if (scores.empty()) return out;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  if (*lo == *hi) return out;

  if (channel == Channel::Vector) {
    const double n = static_cast<double>(scores.size());
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double ss = 0.0;
    for (double s : scores) ss += (s - mean) * (s - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0)) return out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double z = (scores[i] - mean) / sd;
      out[i] = 1.0 / (1.0 + std::exp(-z));
    }
  } else {
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / range;
  }
  return out;
}

ChannelResult make_channel_result(Channel channel, std::vector<ScoredCard> raw) {
  std::vector<double> values;
  values.reserve(raw.size());
  for (const auto& s : raw) values.push_back(s.score);
  ChannelResult result{channel, std::move(raw), {}};
  result.normalized = normalize_channel(channel, values);
  return result;
}

std::vector<RecallCandidate> fuse(const std::vector<ChannelResult>& channels,
                                  const MergeWeights& weights) {
  std::array<const ChannelResult*, kChannelCount> by_channel{};
  for (const auto& c : channels) {
    auto& slot = by_channel[static_cast<std::size_t>(c.channel)];
    if (slot) throw Error(ErrorCode::InvalidArgument, "duplicate channel in fuse input");
    if (c.normalized.size() != c.raw.size()) {
      throw Error(ErrorCode::InvalidArgument, "channel result is not normalized");
    }
    slot = &c;
  }

  std::map<std::string, RecallCandidate> merged;
  for (Channel ch : kAllChannels) {
    const ChannelResult* result = by_channel[static_cast<std::size_t>(ch)];
    if (!result) continue;
    for (std::size_t i = 0; i < result->raw.size(); ++i) {
      auto& cand = merged[result->raw[i].card_id];
      cand.card_id = result->raw[i].card_id;
      cand.raw_scores[ch] = result->raw[i].score;
      cand.normalized_scores[ch] = result->normalized[i];
      cand.path_set.insert(ch);
    }
  }

  std::vector<RecallCandidate> out;
  out.reserve(merged.size());
  for (auto& [id, cand] : merged) {
    double sum = 0.0;
    for (Channel ch : kAllChannels) {
      if (auto it = cand.normalized_scores.find(ch); it != cand.normalized_scores.end()) {
        sum += weights.weight(ch) * it->second;
      }
    }
    sum += weights.multi_match_bonus_unit * static_cast<double>(cand.path_set.size() - 1);
    cand.fused_relevance = std::clamp(sum, 0.0, 1.0);
    out.push_back(std::move(cand));
  }
  std::sort(out.begin(), out.end(), [](const RecallCandidate& a, const RecallCandidate& b) {
    if (a.fused_relevance != b.fused_relevance) return a.fused_relevance > b.fused_relevance;
    return a.card_id < b.card_id;
  });
  return out;
}

RecallEngine::RecallEngine(const GraphStore& store, RecallConfig config)
    : store_(store), config_(std::move(config)) {
  config_.weights.validate();
}

std::vector<ScoredCard> RecallEngine::vector_recall(const EmbeddingVector& query,
                                                    std::size_t k) const {
  return store_.vector_search(query, k);
}

std::vector<ScoredCard> RecallEngine::fulltext_recall(std::string_view query,
                                                      std::size_t k) const {
  return store_.fulltext_search(query, k);
}

std::vector<EntryTag> RecallEngine::entry_tags(std::string_view query_text,
                                               const EmbeddingVector* query_embedding) const {
  const auto query_tokens = tokenize(query_text);
  const std::unordered_set<std::string> query_set(query_tokens.begin(), query_tokens.end());

  std::vector<EntryTag> entries;
  for (const auto& tag : store_.tags()) {
    double score = 0.0;
    const auto name_tokens = tokenize(tag.name);
    if (!name_tokens.empty()) {
      std::size_t hits = 0;
      for (const auto& t : name_tokens) hits += query_set.contains(t) ? 1 : 0;
      score = static_cast<double>(hits) / static_cast<double>(name_tokens.size());
    }
    if (query_embedding && tag.embedding && tag.embedding->dim() == query_embedding->dim()) {
      const double c = cosine(*query_embedding, *tag.embedding);
      if (c >= config_.tag_entry_threshold) score = std::max(score, c);
    }
    if (score > 0.0) entries.push_back({tag.id, score});
  }
  std::sort(entries.begin(), entries.end(), [](const EntryTag& a, const EntryTag& b) {
    return a.score != b.score ? a.score > b.score : a.tag_id < b.tag_id;
  });
  if (entries.size() > config_.max_entry_tags) entries.resize(config_.max_entry_tags);
  return entries;
}

std::vector<ScoredCard> RecallEngine::tag_recall(std::string_view query_text,
                                                 const EmbeddingVector* query_embedding,
                                                 std::size_t k) const {
  const auto entries = entry_tags(query_text, query_embedding);
  if (entries.empty() || k == 0) return {};

  std::unordered_map<std::string, double> tag_score;
  for (const auto& entry : entries) {
    for (const auto& td : store_.expand_tag_descendants({entry.tag_id})) {
      const double s = entry.score * std::pow(config_.tag_depth_decay, td.depth);
      auto [it, inserted] = tag_score.emplace(td.tag_id, s);
      if (!inserted) it->second = std::max(it->second, s);
    }
  }
  std::vector<std::string> tag_ids;
  tag_ids.reserve(tag_score.size());
  for (const auto& [id, s] : tag_score) tag_ids.push_back(id);

  std::unordered_map<std::string, double> card_score;
  for (const auto& [tag_id, card_ids] : store_.cards_by_tag(tag_ids)) {
    const double s = tag_score.at(tag_id);
    for (const auto& card_id : card_ids) {
      auto [it, inserted] = card_score.emplace(card_id, s);
      if (!inserted) it->second = std::max(it->second, s);
    }
  }
  std::vector<ScoredCard> out;
  out.reserve(card_score.size());
  for (auto& [id, s] : card_score) out.push_back({id, s});
  std::sort(out.begin(), out.end(), [](const ScoredCard& a, const ScoredCard& b) {
    return a.score != b.score ? a.score > b.score : a.card_id < b.card_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

std::vector<RecallCandidate> RecallEngine::recall(
    std::string_view query_text, const std::optional<EmbeddingVector>& query_embedding) const {
  const std::string text(query_text);
  const EmbeddingVector* qe = query_embedding ? &*query_embedding : nullptr;
  auto fulltext = std::async(std::launch::async, [&] { return fulltext_recall(text, config_.k); });
  auto tags = std::async(std::launch::async, [&] { return tag_recall(text, qe, config_.k); });
  std::vector<ChannelResult> channels;
  if (qe) channels.push_back(make_channel_result(Channel::Vector, vector_recall(*qe, config_.k)));
  channels.push_back(make_channel_result(Channel::Fulltext, fulltext.get()));
  channels.push_back(make_channel_result(Channel::Tag, tags.get()));
  return fuse(channels, config_.weights);
}

}  // namespace irec
