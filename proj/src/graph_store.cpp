#include "irec/graph_store.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <mutex>

#include "irec/error.hpp"
#include "irec/simd/kernels.hpp"
#include "irec/text.hpp"

namespace irec {

namespace {

std::string name_key(const std::optional<std::string>& parent_id, std::string_view name) {
  return parent_id.value_or("") + '\x1f' + normalize_name(name);
}

std::string indexed_text(const ProblemCard& card) {
  return card.problem_text + '\n' + card.insight_text;
}

bool ranks_before(const ScoredCard& a, const ScoredCard& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.card_id < b.card_id;
}

std::vector<ScoredCard> top_k(std::vector<ScoredCard> all, std::size_t k) {
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    ranks_before);
  all.resize(n);
  return all;
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

}  // namespace

GraphStore::GraphStore() : GraphStore(Options{}) {}

GraphStore::GraphStore(Options options)
    : options_(std::move(options)),
      rng_(options_.id_seed ? *options_.id_seed : std::random_device{}()),
      fulltext_(options_.bm25) {}

std::string GraphStore::next_id_locked() {
  for (;;) {
    std::string id = to_hex(rng_()) + to_hex(rng_());
    if (!card_index_.contains(id) && !tag_index_.contains(id)) return id;
  }
}

GraphStore::CardSlot& GraphStore::slot_locked(const std::string& card_id) {
  auto it = card_index_.find(card_id);
  if (it == card_index_.end()) throw Error(ErrorCode::UnknownCard, card_id);
  return cards_[it->second];
}

const GraphStore::CardSlot& GraphStore::slot_locked(const std::string& card_id) const {
  auto it = card_index_.find(card_id);
  if (it == card_index_.end()) throw Error(ErrorCode::UnknownCard, card_id);
  return cards_[it->second];
}

ProblemCard GraphStore::create_card(std::string_view problem_text, std::string_view insight_text,
                                    const std::set<std::string>& tag_ids, Timestamp now) {
  std::unique_lock lock(mutex_);
  return create_card_locked(problem_text, insight_text, tag_ids, now, std::nullopt);
}

ProblemCard GraphStore::create_card_locked(std::string_view problem_text,
                                           std::string_view insight_text,
                                           const std::set<std::string>& tag_ids,
                                           Timestamp created_at,
                                           std::optional<EmbeddingVector> embedding) {
  if (blank(problem_text)) throw Error(ErrorCode::InvalidArgument, "problem_text is empty");
  for (const auto& tag_id : tag_ids) {
    if (!tag_index_.contains(tag_id)) throw Error(ErrorCode::UnknownTag, tag_id);
  }
  if (embedding && vectors_.dim != 0 && embedding->dim() != vectors_.dim) {
    throw Error(ErrorCode::DimensionMismatch, "card embedding dimension");
  }

  CardSlot slot;
  slot.card.id = next_id_locked();
  slot.card.problem_text = std::string(problem_text);
  slot.card.insight_text = std::string(insight_text);
  slot.card.created_at = created_at;
  slot.card.last_accessed_at = created_at;
  slot.card.tag_ids = tag_ids;

  const auto ordinal = static_cast<std::uint32_t>(cards_.size());
  card_index_.emplace(slot.card.id, ordinal);
  for (const auto& tag_id : tag_ids) tag_cards_[tag_id].insert(slot.card.id);
  fulltext_.upsert(ordinal, indexed_text(slot.card));
  cards_.push_back(std::move(slot));
  if (embedding) put_embedding_locked(ordinal, std::move(*embedding));
  return cards_.back().card;
}

ProblemCard GraphStore::record_access(const std::string& card_id, Timestamp now) {
  std::unique_lock lock(mutex_);
  auto& card = slot_locked(card_id).card;
  card.access_count += 1;
  card.last_accessed_at = std::max(now, card.created_at);
  return card;
}

ProblemCard GraphStore::set_insight_text(const std::string& card_id, std::string insight_text) {
  std::unique_lock lock(mutex_);
  auto& slot = slot_locked(card_id);
  slot.card.insight_text = std::move(insight_text);
  slot.revision += 1;
  fulltext_.upsert(card_index_.at(card_id), indexed_text(slot.card));
  return slot.card;
}

void GraphStore::put_embedding_locked(std::uint32_t ordinal, EmbeddingVector embedding) {
  if (!embedding.is_unit()) throw Error(ErrorCode::InvalidArgument, "embedding is not unit-norm");
  if (vectors_.dim == 0) vectors_.dim = embedding.dim();
  if (embedding.dim() != vectors_.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "store holds " + std::to_string(vectors_.dim) + "-d embeddings");
  }
  auto& slot = cards_[ordinal];
  const auto values = embedding.values();
  if (slot.vector_row < 0) {
    slot.vector_row = static_cast<std::int64_t>(vectors_.row_card.size());
    vectors_.row_card.push_back(ordinal);
    vectors_.rows.insert(vectors_.rows.end(), values.begin(), values.end());
    vectors_.norms.push_back(embedding.norm());
  } else {
    const auto row = static_cast<std::size_t>(slot.vector_row);
    std::copy(values.begin(), values.end(),
              vectors_.rows.begin() + static_cast<std::ptrdiff_t>(row * vectors_.dim));
    vectors_.norms[row] = embedding.norm();
  }
  slot.card.embedding = std::move(embedding);
}

bool GraphStore::set_card_embedding(const std::string& card_id, EmbeddingVector embedding,
                                    std::uint64_t revision) {
  std::unique_lock lock(mutex_);
  auto& slot = slot_locked(card_id);
  if (slot.revision != revision) return false;
  put_embedding_locked(card_index_.at(card_id), std::move(embedding));
  return true;
}

std::uint64_t GraphStore::card_revision(const std::string& card_id) const {
  std::shared_lock lock(mutex_);
  return slot_locked(card_id).revision;
}

void GraphStore::add_card_tag(const std::string& card_id, const std::string& tag_id) {
  std::unique_lock lock(mutex_);
  auto& slot = slot_locked(card_id);
  if (!tag_index_.contains(tag_id)) throw Error(ErrorCode::UnknownTag, tag_id);
  slot.card.tag_ids.insert(tag_id);
  tag_cards_[tag_id].insert(card_id);
}

std::optional<ProblemCard> GraphStore::find_card(const std::string& card_id) const {
  std::shared_lock lock(mutex_);
  auto it = card_index_.find(card_id);
  if (it == card_index_.end()) return std::nullopt;
  return cards_[it->second].card;
}

ProblemCard GraphStore::get_card(const std::string& card_id) const {
  std::shared_lock lock(mutex_);
  return slot_locked(card_id).card;
}

std::vector<ProblemCard> GraphStore::cards() const {
  std::shared_lock lock(mutex_);
  std::vector<ProblemCard> out;
  out.reserve(cards_.size());
  for (const auto& slot : cards_) out.push_back(slot.card);
  return out;
}

std::size_t GraphStore::card_count() const {
  std::shared_lock lock(mutex_);
  return cards_.size();
}

Tag GraphStore::upsert_tag(std::string_view name, const std::optional<std::string>& parent_id) {
  std::unique_lock lock(mutex_);
  return upsert_tag_locked(name, parent_id);
}

Tag GraphStore::upsert_tag_locked(std::string_view name,
                                  const std::optional<std::string>& parent_id) {
  if (blank(name)) throw Error(ErrorCode::InvalidArgument, "tag name is empty");
  std::uint32_t level = 0;
  if (parent_id) {
    auto it = tag_index_.find(*parent_id);
    if (it == tag_index_.end()) throw Error(ErrorCode::UnknownParent, *parent_id);
    level = tags_[it->second].level + 1;
  }
  const auto key = name_key(parent_id, name);
  if (auto it = tag_name_index_.find(key); it != tag_name_index_.end()) {
    return tags_[tag_index_.at(it->second)];
  }

  Tag tag;
  tag.id = next_id_locked();
  const auto first = name.find_first_not_of(" \t\r\n");
  const auto last = name.find_last_not_of(" \t\r\n");
  tag.name = std::string(name.substr(first, last - first + 1));
  tag.parent_id = parent_id;
  tag.level = level;
  if (options_.tag_embedder) tag.embedding = options_.tag_embedder->embed(tag.name);

  tag_index_.emplace(tag.id, static_cast<std::uint32_t>(tags_.size()));
  tag_name_index_.emplace(key, tag.id);
  if (parent_id) tag_children_[*parent_id].insert(tag.id);
  tags_.push_back(tag);
  return tag;
}

std::string GraphStore::ensure_tag_path_locked(std::string_view path) {
  std::optional<std::string> parent;
  std::size_t start = 0;
  bool any = false;
  while (start <= path.size()) {
    auto end = path.find('/', start);
    if (end == std::string_view::npos) end = path.size();
    const auto segment = path.substr(start, end - start);
    if (!blank(segment)) {
      parent = upsert_tag_locked(segment, parent).id;
      any = true;
    }
    start = end + 1;
  }
  if (!any) throw Error(ErrorCode::InvalidArgument, "empty tag path");
  return *parent;
}

std::optional<Tag> GraphStore::find_tag(const std::string& tag_id) const {
  std::shared_lock lock(mutex_);
  auto it = tag_index_.find(tag_id);
  if (it == tag_index_.end()) return std::nullopt;
  return tags_[it->second];
}

Tag GraphStore::get_tag(const std::string& tag_id) const {
  auto tag = find_tag(tag_id);
  if (!tag) throw Error(ErrorCode::UnknownTag, tag_id);
  return *tag;
}

std::vector<Tag> GraphStore::tags() const {
  std::shared_lock lock(mutex_);
  return tags_;
}

std::vector<Tag> GraphStore::root_tags() const {
  std::shared_lock lock(mutex_);
  std::vector<Tag> out;
  for (const auto& t : tags_) {
    if (!t.parent_id) out.push_back(t);
  }
  std::sort(out.begin(), out.end(), [](const Tag& a, const Tag& b) { return a.id < b.id; });
  return out;
}

std::size_t GraphStore::tag_count() const {
  std::shared_lock lock(mutex_);
  return tags_.size();
}

std::vector<TagDepth> GraphStore::expand_tag_descendants(
    const std::vector<std::string>& entry_tag_ids) const {
  std::shared_lock lock(mutex_);
  std::unordered_map<std::string, std::uint32_t> depth;
  std::deque<std::string> frontier;
  for (const auto& id : entry_tag_ids) {
    if (!tag_index_.contains(id)) throw Error(ErrorCode::UnknownTag, id);
    if (depth.emplace(id, 0).second) frontier.push_back(id);
  }
  while (!frontier.empty()) {
    const std::string current = std::move(frontier.front());
    frontier.pop_front();
    const auto d = depth.at(current);
    auto it = tag_children_.find(current);
    if (it == tag_children_.end()) continue;
    for (const auto& child : it->second) {
      if (depth.emplace(child, d + 1).second) frontier.push_back(child);
    }
  }
  std::vector<TagDepth> out;
  out.reserve(depth.size());
  for (auto& [id, d] : depth) out.push_back({id, d});
  std::sort(out.begin(), out.end(), [](const TagDepth& a, const TagDepth& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.tag_id < b.tag_id;
  });
  return out;
}

std::unordered_map<std::string, std::vector<std::string>> GraphStore::cards_by_tag(
    const std::vector<std::string>& tag_ids) const {
  std::shared_lock lock(mutex_);
  std::unordered_map<std::string, std::vector<std::string>> out;
  for (const auto& tag_id : tag_ids) {
    auto it = tag_cards_.find(tag_id);
    if (it == tag_cards_.end()) continue;
    out[tag_id].assign(it->second.begin(), it->second.end());
  }
  return out;
}

std::size_t GraphStore::edge_count() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& slot : cards_) n += slot.card.tag_ids.size();
  return n;
}

std::vector<ScoredCard> GraphStore::vector_search(const EmbeddingVector& query,
                                                  std::size_t k) const {
  std::shared_lock lock(mutex_);
  if (vectors_.row_card.empty() || k == 0) return {};
  if (query.dim() != vectors_.dim) {
    throw Error(ErrorCode::DimensionMismatch, "query embedding dimension");
  }
  const double qnorm = query.norm();
  if (qnorm == 0.0) return {};

  std::vector<double> dots(vectors_.row_card.size());
  simd::dot_rows(vectors_.rows, vectors_.dim, query.values(), dots);

  std::vector<ScoredCard> all;
  all.reserve(dots.size());
  for (std::size_t r = 0; r < dots.size(); ++r) {
    const double c = std::clamp(dots[r] / (qnorm * vectors_.norms[r]), -1.0, 1.0);
    all.push_back({cards_[vectors_.row_card[r]].card.id, c});
  }
  return top_k(std::move(all), k);
}

std::vector<ScoredCard> GraphStore::fulltext_search(std::string_view query, std::size_t k) const {
  std::shared_lock lock(mutex_);
  if (k == 0) return {};
  std::vector<ScoredCard> all;
  for (const auto& [ordinal, score] : fulltext_.score_all(query)) {
    all.push_back({cards_[ordinal].card.id, score});
  }
  return top_k(std::move(all), k);
}

void GraphStore::clear_locked() {
  cards_.clear();
  card_index_.clear();
  tags_.clear();
  tag_index_.clear();
  tag_children_.clear();
  tag_name_index_.clear();
  tag_cards_.clear();
  fulltext_.clear();
  vectors_.clear();
}

GraphSnapshot GraphStore::snapshot() const {
  std::shared_lock lock(mutex_);
  GraphSnapshot snap;
  snap.tags = tags_;
  for (const auto& slot : cards_) {
    snap.cards.push_back(slot.card);
    for (const auto& tag_id : slot.card.tag_ids) snap.edges.push_back({slot.card.id, tag_id});
  }
  std::sort(snap.edges.begin(), snap.edges.end());
  return snap;
}

void GraphStore::restore(const GraphSnapshot& snap) {
  if (snap.version != kSnapshotVersion) {
    throw Error(ErrorCode::VersionMismatch, "snapshot version " + std::to_string(snap.version));
  }
  // Validate everything before touching the live graph.
  std::unordered_map<std::string, const Tag*> tag_by_id;
  for (const auto& t : snap.tags) {
    if (t.id.empty() || blank(t.name)) throw Error(ErrorCode::CorruptSnapshot, "tag without id/name");
    if (!tag_by_id.emplace(t.id, &t).second) {
      throw Error(ErrorCode::CorruptSnapshot, "duplicate tag id " + t.id);
    }
  }
  for (const auto& t : snap.tags) {
    if (!t.parent_id) {
      if (t.level != 0) throw Error(ErrorCode::CorruptSnapshot, "root tag with level > 0");
      continue;
    }
    auto it = tag_by_id.find(*t.parent_id);
    if (it == tag_by_id.end()) throw Error(ErrorCode::CorruptSnapshot, "dangling parent " + *t.parent_id);
    // Walk to a root; a walk longer than the tag count is a cycle.
    std::size_t steps = 0;
    for (const Tag* cur = &t; cur->parent_id; cur = tag_by_id.at(*cur->parent_id)) {
      if (++steps > snap.tags.size()) throw Error(ErrorCode::CycleDetected, t.id);
      if (!tag_by_id.contains(*cur->parent_id)) {
        throw Error(ErrorCode::CorruptSnapshot, "dangling parent " + *cur->parent_id);
      }
    }
    if (t.level != it->second->level + 1) {
      throw Error(ErrorCode::CorruptSnapshot, "inconsistent level for tag " + t.id);
    }
  }
  std::unordered_map<std::string, std::size_t> card_pos;
  std::size_t dim = 0;
  for (std::size_t i = 0; i < snap.cards.size(); ++i) {
    const auto& c = snap.cards[i];
    if (c.id.empty() || tag_by_id.contains(c.id) || !card_pos.emplace(c.id, i).second) {
      throw Error(ErrorCode::CorruptSnapshot, "duplicate or empty card id " + c.id);
    }
    if (c.last_accessed_at < c.created_at) {
      throw Error(ErrorCode::CorruptSnapshot, "last_accessed_at before created_at on " + c.id);
    }
    if (c.embedding) {
      if (!c.embedding->is_unit()) throw Error(ErrorCode::CorruptSnapshot, "non-unit embedding");
      if (dim == 0) dim = c.embedding->dim();
      if (c.embedding->dim() != dim) throw Error(ErrorCode::CorruptSnapshot, "mixed dimensions");
    }
  }
  std::vector<std::set<std::string>> card_tags(snap.cards.size());
  for (const auto& e : snap.edges) {
    auto it = card_pos.find(e.card_id);
    if (it == card_pos.end() || !tag_by_id.contains(e.tag_id)) {
      throw Error(ErrorCode::CorruptSnapshot, "edge endpoint does not resolve");
    }
    card_tags[it->second].insert(e.tag_id);
  }
  for (std::size_t i = 0; i < snap.cards.size(); ++i) {
    if (!snap.cards[i].tag_ids.empty() && snap.cards[i].tag_ids != card_tags[i]) {
      throw Error(ErrorCode::CorruptSnapshot, "card tag set disagrees with edges");
    }
  }

  std::unique_lock lock(mutex_);
  clear_locked();
  for (const auto& t : snap.tags) {
    tag_index_.emplace(t.id, static_cast<std::uint32_t>(tags_.size()));
    tag_name_index_.emplace(name_key(t.parent_id, t.name), t.id);
    if (t.parent_id) tag_children_[*t.parent_id].insert(t.id);
    tags_.push_back(t);
  }
  for (std::size_t i = 0; i < snap.cards.size(); ++i) {
    CardSlot slot;
    slot.card = snap.cards[i];
    slot.card.tag_ids = card_tags[i];
    slot.card.embedding.reset();
    const auto ordinal = static_cast<std::uint32_t>(cards_.size());
    card_index_.emplace(slot.card.id, ordinal);
    for (const auto& tag_id : slot.card.tag_ids) tag_cards_[tag_id].insert(slot.card.id);
    fulltext_.upsert(ordinal, indexed_text(slot.card));
    cards_.push_back(std::move(slot));
    if (snap.cards[i].embedding) put_embedding_locked(ordinal, *snap.cards[i].embedding);
  }
}

}  // namespace irec
