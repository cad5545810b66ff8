#pragma once
// JSON request dispatch shared by the HTTP server and the embedded CLI.
//
//   POST /query                 {query, mode?, filter_level?}     -> {session_id}
//   GET  /sessions/{id}         session state
//   GET  /sessions/{id}/events  ?from=N&wait_ms=M                -> {events, terminal}
//   GET  /sessions/{id}/log                                       -> {steps}
//   POST /sessions/{id}/open    {card_id}                         -> {card}
//   POST /insights              {note}                            -> {card, decisions}
//   POST /cards/{id}/insights   {text}                            -> {card}
//   GET  /cards/{id}
//   GET  /decisions             ?pending=true
//   GET  /decisions/{id}
//   POST /decisions/{id}        {action, outcome?}
//   POST /inquiry               {card_id, problem_id? | problem?}
//   POST /inquiry/{id}/turns    {text}
//   GET  /inquiry/{id}
//   POST /import                {records, parallelism?}
//   GET  /stats
//   GET  /health

#include <filesystem>
#include <json.hpp>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "irec/config.hpp"
#include "irec/error.hpp"
#include "irec/graph_store.hpp"
#include "irec/workflow.hpp"

namespace irec {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

int http_status(ErrorCode code) noexcept;
nlohmann::json error_body(const Error& error);

nlohmann::json card_to_json(const ProblemCard& card, const GraphStore& store);

class ApiService {
 public:
  // Builds providers from `config` and loads the store (and the decisions
  // sidecar) when store_path exists.
  explicit ApiService(AppConfig config, Clock clock = system_clock_seconds);
  // Same, with an injected LLM client.
  ApiService(AppConfig config, std::shared_ptr<LlmClient> llm, Clock clock = system_clock_seconds);
  ~ApiService();

  ApiResponse handle(std::string_view method, std::string_view target, const nlohmann::json& body);

  ImportReport import_stream(std::istream& input, std::size_t parallelism, const ProgressSink& progress);

  // Writes the snapshot and the decisions sidecar; no-op without store_path.
  void persist();

  Workflow& workflow() noexcept { return *workflow_; }
  GraphStore& store() noexcept { return *store_; }
  const AppConfig& config() const noexcept { return config_; }

  static std::filesystem::path decisions_path(const std::filesystem::path& store_path);

 private:
  ApiResponse dispatch(std::string_view method, const std::vector<std::string>& parts,
                       const std::map<std::string, std::string>& query, const nlohmann::json& body);

  AppConfig config_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  std::unique_ptr<GraphStore> store_;
  std::unique_ptr<Workflow> workflow_;
  std::mutex persist_mutex_;
};

// "/a/b?x=1&y=2" -> path segments and decoded query parameters.
std::pair<std::vector<std::string>, std::map<std::string, std::string>> split_target(std::string_view target);

}  // namespace irec
