#pragma once
// Three-path hybrid recall: vector similarity, BM25 fulltext and tag
// hierarchy expansion, each normalized per channel and fused into a single
// relevance score with a bonus for cards found by several channels.

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irec/embeddings.hpp"
#include "irec/graph_store.hpp"

namespace irec {

enum class Channel { Vector = 0, Fulltext = 1, Tag = 2 };

inline constexpr std::array<Channel, 3> kAllChannels{Channel::Vector, Channel::Fulltext,
                                                     Channel::Tag};
inline constexpr std::size_t kChannelCount = kAllChannels.size();

std::string_view to_string(Channel channel) noexcept;

struct MergeWeights {
  double vector = 0.5;
  double fulltext = 0.3;
  double tag = 0.2;
  double multi_match_bonus_unit = 0.1;

  double weight(Channel channel) const noexcept;
  // Throws InvalidConfig unless weights are non-negative and sum to 1 (1e-9).
  void validate() const;
};

struct RecallConfig {
  std::size_t k = 50;
  MergeWeights weights;
  double tag_entry_threshold = 0.6;
  double tag_depth_decay = 0.8;
  std::size_t max_entry_tags = 3;
  double timeout_s = 5.0;
};

struct ChannelResult {
  Channel channel = Channel::Vector;
  std::vector<ScoredCard> raw;
  std::vector<double> normalized;  // parallel to raw
};

struct RecallCandidate {
  std::string card_id;
  std::map<Channel, double> raw_scores;
  std::map<Channel, double> normalized_scores;
  std::set<Channel> path_set;
  double fused_relevance = 0.0;
};

struct EntryTag {
  std::string tag_id;
  double score = 0.0;
};

// Vector scores: sample z-score then logistic squash into (0, 1).
// Fulltext and tag scores: min-max into [0, 1].
// A constant list (including a single score) maps to 0.5 everywhere.
std::vector<double> normalize_channel(Channel channel, std::span<const double> scores);

ChannelResult make_channel_result(Channel channel, std::vector<ScoredCard> raw);

// Weighted sum of normalized channel scores plus the multi-match bonus,
// clamped to [0, 1]. Sorted by fused relevance, then card id. The result
// does not depend on the order of `channels`; each channel may appear once.
std::vector<RecallCandidate> fuse(const std::vector<ChannelResult>& channels,
                                  const MergeWeights& weights);

class RecallEngine {
 public:
  RecallEngine(const GraphStore& store, RecallConfig config);

  const RecallConfig& config() const noexcept { return config_; }

  std::vector<ScoredCard> vector_recall(const EmbeddingVector& query, std::size_t k) const;
  std::vector<ScoredCard> fulltext_recall(std::string_view query, std::size_t k) const;

  // Tags whose name tokens occur in the query (score = matched fraction of
  // the name tokens) or whose embedding is close to the query (score =
  // cosine, when above the entry threshold). Best max_entry_tags kept.
  std::vector<EntryTag> entry_tags(std::string_view query_text,
                                   const EmbeddingVector* query_embedding) const;

  // Cards under the expanded entry tags, scored entry_score * decay^depth,
  // maximized over the card's tags.
  std::vector<ScoredCard> tag_recall(std::string_view query_text,
                                     const EmbeddingVector* query_embedding, std::size_t k) const;

  // Runs the three channels concurrently and fuses them. Without an
  // embedding the vector channel is skipped.
  std::vector<RecallCandidate> recall(std::string_view query_text,
                                      const std::optional<EmbeddingVector>& query_embedding) const;

 private:
  const GraphStore& store_;
  RecallConfig config_;
};

}  // namespace irec
