#pragma once
// Query sessions: recall -> fuse -> rerank -> assess -> filter, with events
// pushed as each stage lands and one timing record per stage.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "irec/config.hpp"
#include "irec/graph_store.hpp"
#include "irec/llm_gateway.hpp"
#include "irec/recall.hpp"
#include "irec/rerank.hpp"
#include "irec/tag_mapper.hpp"

namespace boost::asio {
class thread_pool;
}

namespace irec {

enum class SessionState { Running, Complete, Failed };

enum class EventKind {
  PreliminaryResults,
  TagsResolved,
  RerankedResults,
  AssessmentsReady,
  FinalResults,
  Error,
};

std::string_view to_string(SessionState state) noexcept;
std::string_view to_string(EventKind kind) noexcept;

struct SessionEvent {
  std::string session_id;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Error;
  nlohmann::json payload;
  Timestamp emitted_at = 0;

  bool terminal() const noexcept {
    return kind == EventKind::FinalResults || kind == EventKind::Error;
  }
};

struct StepLog {
  std::string session_id;
  std::string step_name;
  double duration_ms = 0.0;
  std::string detail;
};

struct QuerySessionInfo {
  std::string session_id;
  std::string query_text;
  LearningMode mode = LearningMode::Balanced;
  FilterLevel filter_level;
  Timestamp started_at = 0;
  SessionState state = SessionState::Running;
};

struct CaptureResult {
  ProblemCard card;
  ParsedInsight parsed;
  std::vector<MappingDecision> decisions;
};

using Clock = std::function<Timestamp()>;

Timestamp system_clock_seconds();

struct WorkflowOptions {
  RecallConfig recall;
  SignalParams signals;
  FilterConfig filter;
  TagMapperConfig tag_mapper;
  StageTimeouts timeouts;
  std::string tutor_directive;
  std::size_t workers = 4;
  Clock clock = system_clock_seconds;
};

class Workflow {
 public:
  Workflow(GraphStore& store, std::shared_ptr<const EmbeddingProvider> embedder,
           std::shared_ptr<LlmClient> llm, WorkflowOptions options);
  ~Workflow();

  Workflow(const Workflow&) = delete;
  Workflow& operator=(const Workflow&) = delete;

  GraphStore& store() noexcept { return store_; }
  TagMapper& tag_mapper() noexcept { return *mapper_; }
  LlmGateway& gateway() noexcept { return *gateway_; }
  const WorkflowOptions& options() const noexcept { return options_; }
  Timestamp now() const { return options_.clock(); }

  // Starts a session and returns its id at once; the pipeline runs in the
  // background. Throws EmptyQuery.
  std::string submit_query(std::string_view query_text, LearningMode mode, const FilterLevel& level);

  QuerySessionInfo session(const std::string& session_id) const;
  // Events with seq >= from_seq. Blocks up to `wait` for at least one
  // event unless the session is already terminal.
  std::vector<SessionEvent> events(const std::string& session_id, std::uint64_t from_seq,
                                   std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const;
  // Blocks until the terminal event and returns every event.
  std::vector<SessionEvent> wait_terminal(const std::string& session_id,
                                          std::chrono::milliseconds timeout) const;

  std::vector<StepLog> get_session_log(const std::string& session_id) const;

  // Records one access per (session, card). Throws UnknownSession, NotInSession.
  ProblemCard open_result(const std::string& session_id, const std::string& card_id);

  CaptureResult capture_insight(std::string_view raw_note);
  ProblemCard append_insight(const std::string& card_id, std::string_view text);

  // Opens a tutor dialogue about `card_id` against the current problem,
  // given as a card id, a query session id or free text.
  InquirySession start_inquiry(const std::optional<std::string>& problem_ref,
                               const std::optional<std::string>& problem_text,
                               const std::string& card_id);
  InquiryTurn inquiry_reply(const std::string& inquiry_id, const std::string& text);
  InquirySession inquiry(const std::string& inquiry_id) const;

  // Queues background embedding for every card that has none.
  std::size_t embed_missing();
  // Waits for background embedding jobs.
  void wait_idle();
  // Called after each background job that changed the store.
  void on_background_change(std::function<void()> hook);

 private:
  struct Session;

  void run_pipeline(const std::shared_ptr<Session>& session);
  void emit(Session& session, EventKind kind, nlohmann::json payload);
  void log_step(Session& session, std::string step, double ms, std::string detail);
  void schedule_embedding(const std::string& card_id);
  std::shared_ptr<Session> find_session(const std::string& id) const;
  nlohmann::json result_json(const RankedResult& r,
                             const std::optional<SimilarityAssessment>& assessment,
                             bool assessed) const;

  GraphStore& store_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  std::unique_ptr<LlmGateway> gateway_;
  std::unique_ptr<TagMapper> mapper_;
  RecallEngine recall_;
  WorkflowOptions options_;

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, InquirySession> inquiries_;
  std::uint64_t next_session_ = 1;
  std::uint64_t next_inquiry_ = 1;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::size_t pending_jobs_ = 0;
  std::function<void()> background_hook_;

  // Pipelines run on `sessions_pool_`; their stage tasks on `stages_pool_`,
  // which never waits, so a full sessions pool cannot starve it.
  std::unique_ptr<boost::asio::thread_pool> sessions_pool_;
  std::unique_ptr<boost::asio::thread_pool> stages_pool_;
};

nlohmann::json to_json(const SessionEvent& event);
nlohmann::json to_json(const StepLog& log);

}  // namespace irec
