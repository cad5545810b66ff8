#pragma once
// Embedded property-graph store: ProblemCard and Tag nodes, HAS_TAG and
// PARENT_OF edges, a BM25 fulltext index over card text and an exact
// vector index over card embeddings.
//
// Readers share the lock; every mutation takes it exclusively and updates
// the indexes before releasing it.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "irec/embeddings.hpp"
#include "irec/fulltext_index.hpp"

namespace irec {

using Timestamp = std::int64_t;  // UTC seconds

inline constexpr int kSnapshotVersion = 1;
inline constexpr double kSecondsPerDay = 86400.0;

struct ProblemCard {
  std::string id;
  std::string problem_text;
  std::string insight_text;
  std::optional<EmbeddingVector> embedding;
  Timestamp created_at = 0;
  Timestamp last_accessed_at = 0;
  std::uint64_t access_count = 0;
  std::set<std::string> tag_ids;

  friend bool operator==(const ProblemCard&, const ProblemCard&) = default;
};

struct Tag {
  std::string id;
  std::string name;
  std::optional<std::string> parent_id;
  std::uint32_t level = 0;
  std::optional<EmbeddingVector> embedding;

  friend bool operator==(const Tag&, const Tag&) = default;
};

struct HasTagEdge {
  std::string card_id;
  std::string tag_id;

  friend auto operator<=>(const HasTagEdge&, const HasTagEdge&) = default;
};

struct GraphSnapshot {
  int version = kSnapshotVersion;
  std::vector<ProblemCard> cards;
  std::vector<Tag> tags;
  std::vector<HasTagEdge> edges;

  friend bool operator==(const GraphSnapshot&, const GraphSnapshot&) = default;
};

struct ScoredCard {
  std::string card_id;
  double score = 0.0;

  friend bool operator==(const ScoredCard&, const ScoredCard&) = default;
};

struct TagDepth {
  std::string tag_id;
  std::uint32_t depth = 0;

  friend bool operator==(const TagDepth&, const TagDepth&) = default;
};

struct ImportReport {
  std::size_t imported = 0;
  std::size_t failed = 0;
  std::chrono::milliseconds elapsed{0};
  std::vector<std::string> errors;  // "line N: reason"
};

// Called after each committed record with (processed, failed) so far.
using ProgressSink = std::function<void(std::size_t processed, std::size_t failed)>;

class GraphStore {
 public:
  struct Options {
    // Embeds tag names on creation so the tag channel can match by meaning.
    std::shared_ptr<const EmbeddingProvider> tag_embedder;
    // Fixes the id sequence for reproducible runs.
    std::optional<std::uint64_t> id_seed;
    Bm25Params bm25;
  };

  GraphStore();
  explicit GraphStore(Options options);

  GraphStore(const GraphStore&) = delete;
  GraphStore& operator=(const GraphStore&) = delete;

  // Cards

  ProblemCard create_card(std::string_view problem_text, std::string_view insight_text,
                          const std::set<std::string>& tag_ids, Timestamp now);
  ProblemCard record_access(const std::string& card_id, Timestamp now);
  // Replaces the insight text and reindexes it; bumps the card revision.
  ProblemCard set_insight_text(const std::string& card_id, std::string insight_text);
  // Attaches an embedding computed for `revision`; stale revisions are
  // dropped and false is returned.
  bool set_card_embedding(const std::string& card_id, EmbeddingVector embedding,
                          std::uint64_t revision);
  std::uint64_t card_revision(const std::string& card_id) const;
  void add_card_tag(const std::string& card_id, const std::string& tag_id);

  std::optional<ProblemCard> find_card(const std::string& card_id) const;
  ProblemCard get_card(const std::string& card_id) const;
  std::vector<ProblemCard> cards() const;
  std::size_t card_count() const;

  // Tags

  Tag upsert_tag(std::string_view name, const std::optional<std::string>& parent_id);
  std::optional<Tag> find_tag(const std::string& tag_id) const;
  Tag get_tag(const std::string& tag_id) const;
  std::vector<Tag> tags() const;
  std::vector<Tag> root_tags() const;
  std::size_t tag_count() const;

  // Every descendant of the entry tags, entries included at depth 0, with
  // the minimal depth from any entry. Sorted by (depth, tag_id).
  std::vector<TagDepth> expand_tag_descendants(const std::vector<std::string>& entry_tag_ids) const;

  // Card ids carrying any of `tag_ids`, keyed by tag.
  std::unordered_map<std::string, std::vector<std::string>> cards_by_tag(
      const std::vector<std::string>& tag_ids) const;

  std::size_t edge_count() const;

  // Search primitives

  // Top-k cards by cosine similarity; cards without embeddings are skipped.
  std::vector<ScoredCard> vector_search(const EmbeddingVector& query, std::size_t k) const;
  // Top-k cards by BM25 over problem + insight text.
  std::vector<ScoredCard> fulltext_search(std::string_view query, std::size_t k) const;

  // Bulk import

  // Reads JSONL records, parses and embeds them on `parallelism` workers and
  // commits them in input order. Malformed records are counted, never fatal.
  // Tag strings are '/'-separated paths from a root, created on demand.
  ImportReport bulk_import(std::istream& input, std::size_t parallelism,
                           const ProgressSink& progress, const EmbeddingProvider* embedder,
                           Timestamp now);

  // Persistence

  GraphSnapshot snapshot() const;
  // Replaces the whole graph. Throws CorruptSnapshot or CycleDetected on an
  // inconsistent snapshot and leaves the store unchanged.
  void restore(const GraphSnapshot& snapshot);
  void save_snapshot(const std::filesystem::path& path) const;
  GraphSnapshot load_snapshot(const std::filesystem::path& path);

 private:
  struct CardSlot {
    ProblemCard card;
    std::uint64_t revision = 0;
    std::int64_t vector_row = -1;
  };

  struct VectorIndex {
    std::size_t dim = 0;
    std::vector<double> rows;  // row-major, dim columns
    std::vector<double> norms;
    std::vector<std::uint32_t> row_card;
    void clear() { *this = VectorIndex{}; }
  };

  std::string next_id_locked();
  ProblemCard create_card_locked(std::string_view problem_text, std::string_view insight_text,
                                 const std::set<std::string>& tag_ids, Timestamp created_at,
                                 std::optional<EmbeddingVector> embedding);
  Tag upsert_tag_locked(std::string_view name, const std::optional<std::string>& parent_id);
  std::string ensure_tag_path_locked(std::string_view path);
  void put_embedding_locked(std::uint32_t ordinal, EmbeddingVector embedding);
  CardSlot& slot_locked(const std::string& card_id);
  const CardSlot& slot_locked(const std::string& card_id) const;
  void clear_locked();

  Options options_;
  mutable std::shared_mutex mutex_;
  std::mt19937_64 rng_;

  std::vector<CardSlot> cards_;
  std::unordered_map<std::string, std::uint32_t> card_index_;

  std::vector<Tag> tags_;
  std::unordered_map<std::string, std::uint32_t> tag_index_;
  std::unordered_map<std::string, std::set<std::string>> tag_children_;
  std::unordered_map<std::string, std::string> tag_name_index_;  // parent '\x1f' normalized name
  std::unordered_map<std::string, std::set<std::string>> tag_cards_;

  FulltextIndex fulltext_;
  VectorIndex vectors_;
};

// Snapshot JSON codec, shared with the HTTP layer and tests.
std::string snapshot_to_json(const GraphSnapshot& snapshot);
GraphSnapshot snapshot_from_json(std::string_view text);

}  // namespace irec
