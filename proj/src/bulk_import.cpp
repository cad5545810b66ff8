#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include <json.hpp>
#include <latch>
#include <mutex>

#include "irec/error.hpp"
#include "irec/graph_store.hpp"

namespace irec {

namespace {

struct ParsedRecord {
  std::size_t line = 0;
  std::string raw;
  std::string error;
  std::string problem;
  std::string insight;
  std::vector<std::string> tags;
  std::optional<Timestamp> created_at;
  std::optional<EmbeddingVector> embedding;
};

void parse_record(ParsedRecord& rec, const EmbeddingProvider* embedder) {
  using nlohmann::json;
  try {
    const auto j = json::parse(rec.raw);
    if (!j.is_object()) throw std::invalid_argument("record is not an object");
    const auto& problem = j.at("problem");
    const auto& insight = j.at("insight");
    if (!problem.is_string() || !insight.is_string()) {
      throw std::invalid_argument("problem/insight must be strings");
    }
    rec.problem = problem.get<std::string>();
    rec.insight = insight.get<std::string>();
    if (rec.problem.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw std::invalid_argument("problem is empty");
    }
    if (auto it = j.find("tags"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) throw std::invalid_argument("tags must be an array");
      for (const auto& t : *it) {
        if (!t.is_string()) throw std::invalid_argument("tags must be strings");
        rec.tags.push_back(t.get<std::string>());
      }
    }
    if (auto it = j.find("created_at"); it != j.end() && !it->is_null()) {
      if (!it->is_number_integer()) throw std::invalid_argument("created_at must be an integer");
      rec.created_at = it->get<Timestamp>();
    }
    if (embedder) rec.embedding = embedder->embed(rec.problem + '\n' + rec.insight);
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
}

}  // namespace

ImportReport GraphStore::bulk_import(std::istream& input, std::size_t parallelism,
                                     const ProgressSink& progress,
                                     const EmbeddingProvider* embedder, Timestamp now) {
  constexpr std::size_t kChunk = 512;
  const auto started = std::chrono::steady_clock::now();
  parallelism = std::max<std::size_t>(1, parallelism);

  ImportReport report;
  std::optional<boost::asio::thread_pool> pool;
  if (parallelism > 1) pool.emplace(parallelism);

  std::size_t line_no = 0;
  std::string line;
  bool eof = false;
  while (!eof) {
    std::vector<ParsedRecord> chunk;
    while (chunk.size() < kChunk) {
      if (!std::getline(input, line)) {
        eof = true;
        break;
      }
      ++line_no;
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      auto& rec = chunk.emplace_back();
      rec.line = line_no;
      rec.raw = line;
    }
    if (chunk.empty()) break;

    if (pool) {
      const std::size_t workers = std::min(parallelism, chunk.size());
      std::latch done(static_cast<std::ptrdiff_t>(workers));
      for (std::size_t w = 0; w < workers; ++w) {
        boost::asio::post(*pool, [&, w] {
          for (std::size_t i = w; i < chunk.size(); i += workers) parse_record(chunk[i], embedder);
          done.count_down();
        });
      }
      done.wait();
    } else {
      for (auto& rec : chunk) parse_record(rec, embedder);
    }

    // Commit in input order through the serialized write path.
    for (auto& rec : chunk) {
      if (rec.error.empty()) {
        try {
          std::unique_lock lock(mutex_);
          std::set<std::string> tag_ids;
          for (const auto& path : rec.tags) tag_ids.insert(ensure_tag_path_locked(path));
          create_card_locked(rec.problem, rec.insight, tag_ids, rec.created_at.value_or(now),
                             std::move(rec.embedding));
          ++report.imported;
        } catch (const Error& e) {
          rec.error = e.what();
        }
      }
      if (!rec.error.empty()) {
        ++report.failed;
        report.errors.push_back("line " + std::to_string(rec.line) + ": " + rec.error);
      }
      if (progress) progress(report.imported + report.failed, report.failed);
    }
  }
  if (pool) pool->join();
  report.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  return report;
}

}  // namespace irec
