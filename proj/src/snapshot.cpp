#include <fstream>
#include <json.hpp>
#include <sstream>
#include <system_error>

#include "irec/error.hpp"
#include "irec/graph_store.hpp"

namespace irec {

namespace {

using nlohmann::json;

json embedding_json(const std::optional<EmbeddingVector>& e) {
  if (!e) return nullptr;
  return json(std::vector<double>(e->values().begin(), e->values().end()));
}

std::optional<EmbeddingVector> embedding_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return EmbeddingVector(j.get<std::vector<double>>());
}

}  // namespace

std::string snapshot_to_json(const GraphSnapshot& snapshot) {
  json cards = json::array();
  for (const auto& c : snapshot.cards) {
    cards.push_back({{"id", c.id},
                     {"problem", c.problem_text},
                     {"insight", c.insight_text},
                     {"embedding", embedding_json(c.embedding)},
                     {"created_at", c.created_at},
                     {"last_accessed_at", c.last_accessed_at},
                     {"access_count", c.access_count}});
  }
  json tags = json::array();
  for (const auto& t : snapshot.tags) {
    tags.push_back({{"id", t.id},
                    {"name", t.name},
                    {"parent_id", t.parent_id ? json(*t.parent_id) : json(nullptr)},
                    {"level", t.level},
                    {"embedding", embedding_json(t.embedding)}});
  }
  json edges = json::array();
  for (const auto& e : snapshot.edges) edges.push_back({{"card_id", e.card_id}, {"tag_id", e.tag_id}});

  json doc = {{"version", snapshot.version}, {"cards", cards}, {"tags", tags}, {"edges", edges}};
  return doc.dump();
}

GraphSnapshot snapshot_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::CorruptSnapshot, e.what());
  }
  try {
    GraphSnapshot snap;
    snap.version = doc.at("version").get<int>();
    if (snap.version != kSnapshotVersion) {
      throw Error(ErrorCode::VersionMismatch, "snapshot version " + std::to_string(snap.version));
    }
    for (const auto& c : doc.at("cards")) {
      ProblemCard card;
      card.id = c.at("id").get<std::string>();
      card.problem_text = c.at("problem").get<std::string>();
      card.insight_text = c.at("insight").get<std::string>();
      card.embedding = embedding_from(c.at("embedding"));
      card.created_at = c.at("created_at").get<Timestamp>();
      card.last_accessed_at = c.at("last_accessed_at").get<Timestamp>();
      card.access_count = c.at("access_count").get<std::uint64_t>();
      snap.cards.push_back(std::move(card));
    }
    for (const auto& t : doc.at("tags")) {
      Tag tag;
      tag.id = t.at("id").get<std::string>();
      tag.name = t.at("name").get<std::string>();
      if (!t.at("parent_id").is_null()) tag.parent_id = t.at("parent_id").get<std::string>();
      tag.level = t.at("level").get<std::uint32_t>();
      tag.embedding = embedding_from(t.at("embedding"));
      snap.tags.push_back(std::move(tag));
    }
    for (const auto& e : doc.at("edges")) {
      snap.edges.push_back({e.at("card_id").get<std::string>(), e.at("tag_id").get<std::string>()});
    }
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < snap.cards.size(); ++i) pos.emplace(snap.cards[i].id, i);
    for (const auto& e : snap.edges) {
      if (auto it = pos.find(e.card_id); it != pos.end()) snap.cards[it->second].tag_ids.insert(e.tag_id);
    }
    return snap;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptSnapshot, e.what());
  }
}

void GraphStore::save_snapshot(const std::filesystem::path& path) const {
  const auto text = snapshot_to_json(snapshot());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

GraphSnapshot GraphStore::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  auto snap = snapshot_from_json(buf.str());
  try {
    restore(snap);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CycleDetected) throw Error(ErrorCode::CorruptSnapshot, e.what());
    throw;
  }
  return snap;
}

}  // namespace irec
