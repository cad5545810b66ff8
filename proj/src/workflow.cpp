#include "irec/workflow.hpp"

#include <spdlog/spdlog.h>

#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include <ctime>
#include <future>

#include "irec/error.hpp"

namespace irec {

using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

namespace {

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

double ms_since(SteadyClock::time_point start) {
  return std::chrono::duration<double, std::milli>(SteadyClock::now() - start).count();
}

SteadyClock::duration seconds(double s) {
  return std::chrono::duration_cast<SteadyClock::duration>(std::chrono::duration<double>(s));
}

template <typename F>
auto post_task(boost::asio::thread_pool& pool, F fn) {
  using R = std::invoke_result_t<F>;
  auto task = std::make_shared<std::packaged_task<R()>>(std::move(fn));
  auto future = task->get_future();
  boost::asio::post(pool, [task] { (*task)(); });
  return future;
}

std::string utc_stamp(Timestamp t) {
  std::time_t tt = static_cast<std::time_t>(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json channel_names(const std::set<Channel>& paths) {
  json out = json::array();
  for (auto c : paths) out.push_back(to_string(c));
  return out;
}

}  // namespace

Timestamp system_clock_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string_view to_string(SessionState state) noexcept {
  switch (state) {
    case SessionState::Running: return "running";
    case SessionState::Complete: return "complete";
    case SessionState::Failed: return "failed";
  }
  return "unknown";
}

std::string_view to_string(EventKind kind) noexcept {
  switch (kind) {
    case EventKind::PreliminaryResults: return "preliminary_results";
    case EventKind::TagsResolved: return "tags_resolved";
    case EventKind::RerankedResults: return "reranked_results";
    case EventKind::AssessmentsReady: return "assessments_ready";
    case EventKind::FinalResults: return "final_results";
    case EventKind::Error: return "error";
  }
  return "unknown";
}

struct Workflow::Session {
  QuerySessionInfo info;
  std::vector<SessionEvent> events;
  std::vector<StepLog> logs;
  std::set<std::string> final_cards;
  std::set<std::string> opened;
  mutable std::mutex mutex;
  mutable std::condition_variable cv;
};

Workflow::Workflow(GraphStore& store, std::shared_ptr<const EmbeddingProvider> embedder,
                   std::shared_ptr<LlmClient> llm, WorkflowOptions options)
    : store_(store),
      embedder_(std::move(embedder)),
      gateway_(std::make_unique<LlmGateway>(std::move(llm), options.tutor_directive)),
      mapper_(std::make_unique<TagMapper>(store_, *gateway_, embedder_, options.tag_mapper)),
      recall_(store_, options.recall),
      options_(std::move(options)),
      sessions_pool_(std::make_unique<boost::asio::thread_pool>(std::max<std::size_t>(1, options_.workers))),
      stages_pool_(std::make_unique<boost::asio::thread_pool>(std::max<std::size_t>(2, options_.workers * 2))) {
  if (!options_.clock) options_.clock = system_clock_seconds;
}

Workflow::~Workflow() {
  sessions_pool_->join();
  stages_pool_->join();
}

std::shared_ptr<Workflow::Session> Workflow::find_session(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, id);
  return it->second;
}

std::string Workflow::submit_query(std::string_view query_text, LearningMode mode,
                                   const FilterLevel& level) {
  if (blank(query_text)) throw Error(ErrorCode::EmptyQuery, "query is empty");
  auto session = std::make_shared<Session>();
  session->info.query_text = std::string(query_text);
  session->info.mode = mode;
  session->info.filter_level = level;
  session->info.started_at = now();
  {
    std::lock_guard lock(mutex_);
    session->info.session_id = "q-" + std::to_string(next_session_++);
    sessions_[session->info.session_id] = session;
  }
  spdlog::info("session {} started: mode={} filter={}", session->info.session_id, to_string(mode),
               level.name);
  boost::asio::post(*sessions_pool_, [this, session] { run_pipeline(session); });
  return session->info.session_id;
}

void Workflow::emit(Session& session, EventKind kind, json payload) {
  {
    std::lock_guard lock(session.mutex);
    SessionEvent e;
    e.session_id = session.info.session_id;
    e.seq = session.events.size();
    e.kind = kind;
    e.payload = std::move(payload);
    e.emitted_at = now();
    session.events.push_back(std::move(e));
  }
  session.cv.notify_all();
}

void Workflow::log_step(Session& session, std::string step, double ms, std::string detail) {
  spdlog::debug("session {} {} {:.3f} ms {}", session.info.session_id, step, ms, detail);
  std::lock_guard lock(session.mutex);
  session.logs.push_back({session.info.session_id, std::move(step), std::max(0.0, ms), std::move(detail)});
}

json Workflow::result_json(const RankedResult& r, const std::optional<SimilarityAssessment>& assessment,
                           bool assessed) const {
  json j = {{"card_id", r.card_id},
            {"relevance", r.relevance},
            {"access", r.access},
            {"temporal", r.temporal},
            {"diversity", r.diversity},
            {"final_score", r.final_score},
            {"mode", to_string(r.mode)},
            {"paths", channel_names(r.path_set)}};
  if (const auto card = store_.find_card(r.card_id)) {
    j["problem"] = card->problem_text;
    j["insight"] = card->insight_text;
  }
  if (assessed) {
    j["assessed"] = assessment.has_value();
    j["similarity"] = assessment ? json(assessment->score) : json(nullptr);
    j["rationale"] = assessment ? json(assessment->rationale) : json(nullptr);
  }
  return j;
}

void Workflow::run_pipeline(const std::shared_ptr<Session>& sp) {
  Session& s = *sp;
  const std::string text = s.info.query_text;
  const std::size_t k = options_.recall.k;
  std::string stage = "embed";
  json partial = json::array();
  try {
    // Stage 1: the embedding and the fulltext channel run side by side.
    const auto embed_start = SteadyClock::now();
    auto embed_future = post_task(*stages_pool_, [embedder = embedder_, text] { return embedder->embed(text); });

    stage = "recall.fulltext";
    auto t = SteadyClock::now();
    auto fulltext = make_channel_result(Channel::Fulltext, recall_.fulltext_recall(text, k));
    log_step(s, "recall.fulltext", ms_since(t), std::to_string(fulltext.raw.size()) + " hits");

    json preliminary = json::array();
    for (std::size_t i = 0; i < fulltext.raw.size(); ++i) {
      json item = {{"card_id", fulltext.raw[i].card_id}, {"score", fulltext.normalized[i]}};
      if (const auto card = store_.find_card(fulltext.raw[i].card_id)) item["problem"] = card->problem_text;
      preliminary.push_back(std::move(item));
    }
    partial = preliminary;
    emit(s, EventKind::PreliminaryResults, {{"channel", "fulltext"}, {"results", preliminary}});

    stage = "embed";
    auto query_embedding = std::make_shared<std::optional<EmbeddingVector>>();
    std::string embed_detail = "ok";
    if (embed_future.wait_until(embed_start + seconds(options_.timeouts.embed_s)) == std::future_status::ready) {
      try {
        *query_embedding = embed_future.get();
      } catch (const Error& e) {
        embed_detail = std::string("degraded: ") + e.what();
        spdlog::warn("session {}: query embedding failed, vector channel skipped: {}", s.info.session_id,
                     e.what());
      }
    } else {
      embed_detail = "degraded: timeout";
      spdlog::warn("session {}: query embedding timed out, vector channel skipped", s.info.session_id);
    }
    log_step(s, "embed", ms_since(embed_start), embed_detail);

    // Stage 3: remaining channels, then the sequential barriers.
    stage = "recall";
    const auto recall_deadline = SteadyClock::now() + seconds(options_.timeouts.recall_s);
    const auto channels_start = SteadyClock::now();
    std::optional<std::future<std::vector<ScoredCard>>> vector_future;
    if (*query_embedding) {
      vector_future = post_task(*stages_pool_, [this, query_embedding, k] {
        return recall_.vector_recall(**query_embedding, k);
      });
    }
    auto tag_future = post_task(*stages_pool_, [this, query_embedding, text, k] {
      const EmbeddingVector* qe = *query_embedding ? &**query_embedding : nullptr;
      return std::make_pair(recall_.entry_tags(text, qe), recall_.tag_recall(text, qe, k));
    });

    std::vector<ChannelResult> channels;
    if (vector_future) {
      if (vector_future->wait_until(recall_deadline) == std::future_status::ready) {
        channels.push_back(make_channel_result(Channel::Vector, vector_future->get()));
        log_step(s, "recall.vector", ms_since(channels_start),
                 std::to_string(channels.back().raw.size()) + " hits");
      } else {
        log_step(s, "recall.vector", ms_since(channels_start), "degraded: timeout");
        spdlog::warn("session {}: vector channel timed out", s.info.session_id);
      }
    } else {
      log_step(s, "recall.vector", 0.0, "skipped: no query embedding");
    }
    channels.push_back(std::move(fulltext));

    json entry_json = json::array();
    if (tag_future.wait_until(recall_deadline) == std::future_status::ready) {
      auto [entries, scored] = tag_future.get();
      for (const auto& e : entries) {
        json item = {{"tag_id", e.tag_id}, {"score", e.score}};
        if (const auto tag = store_.find_tag(e.tag_id)) item["name"] = tag->name;
        entry_json.push_back(std::move(item));
      }
      channels.push_back(make_channel_result(Channel::Tag, std::move(scored)));
      log_step(s, "recall.tag", ms_since(channels_start),
               std::to_string(entries.size()) + " entry tags, " +
                   std::to_string(channels.back().raw.size()) + " hits");
    } else {
      log_step(s, "recall.tag", ms_since(channels_start), "degraded: timeout");
      spdlog::warn("session {}: tag channel timed out", s.info.session_id);
    }
    emit(s, EventKind::TagsResolved, {{"entry_tags", entry_json}});

    stage = "fuse";
    t = SteadyClock::now();
    const auto fused = fuse(channels, options_.recall.weights);
    log_step(s, "fuse", ms_since(t), std::to_string(fused.size()) + " candidates");

    stage = "rerank";
    t = SteadyClock::now();
    const auto ranked = rerank(fused, s.info.mode, now(), store_, options_.signals);
    log_step(s, "rerank", ms_since(t), std::string(to_string(s.info.mode)));
    json reranked = json::array();
    for (const auto& r : ranked) reranked.push_back(result_json(r, std::nullopt, false));
    partial = reranked;
    emit(s, EventKind::RerankedResults, {{"results", reranked}});

    // Stage 4: assessments for the head of the list; failures fail open.
    stage = "assess";
    t = SteadyClock::now();
    const std::size_t n = std::min(options_.filter.assess_top, ranked.size());
    std::vector<std::future<SimilarityAssessment>> pending;
    for (std::size_t i = 0; i < n; ++i) {
      pending.push_back(post_task(*stages_pool_, [this, text, id = ranked[i].card_id] {
        return gateway_->assess_similarity(text, store_.get_card(id));
      }));
    }
    const auto llm_deadline = SteadyClock::now() + seconds(options_.timeouts.llm_s);
    std::vector<AssessedResult> assessed;
    json assessments = json::array();
    std::size_t unassessed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      AssessedResult a{ranked[i], std::nullopt};
      std::string why;
      if (pending[i].wait_until(llm_deadline) == std::future_status::ready) {
        try {
          a.assessment = pending[i].get();
        } catch (const Error& e) {
          if (e.code() != ErrorCode::LlmUnavailable && e.code() != ErrorCode::MalformedLlmResponse) throw;
          why = e.what();
        }
      } else {
        why = "timeout";
      }
      if (!a.assessment) {
        ++unassessed;
        spdlog::warn("session {}: card {} left unassessed: {}", s.info.session_id, a.result.card_id, why);
      }
      assessments.push_back({{"card_id", a.result.card_id},
                             {"similarity", a.assessment ? json(a.assessment->score) : json(nullptr)},
                             {"rationale", a.assessment ? json(a.assessment->rationale) : json(nullptr)}});
      assessed.push_back(std::move(a));
    }
    log_step(s, "assess", ms_since(t),
             std::to_string(n - unassessed) + " assessed, " + std::to_string(unassessed) + " unassessed");
    emit(s, EventKind::AssessmentsReady, {{"assessments", assessments}});

    stage = "filter";
    t = SteadyClock::now();
    const auto kept = filter_by_level(assessed, s.info.filter_level);
    json results = json::array();
    std::set<std::string> final_ids;
    for (const auto& a : kept) {
      results.push_back(result_json(a.result, a.assessment, true));
      final_ids.insert(a.result.card_id);
    }
    log_step(s, "filter", ms_since(t),
             s.info.filter_level.name + " <= " + std::to_string(s.info.filter_level.threshold) + ", " +
                 std::to_string(kept.size()) + " kept");
    {
      std::lock_guard lock(s.mutex);
      s.final_cards = std::move(final_ids);
      s.info.state = SessionState::Complete;
    }
    emit(s, EventKind::FinalResults,
         {{"results", results},
          {"provide_nothing", results.empty()},
          {"mode", to_string(s.info.mode)},
          {"filter_level", s.info.filter_level.name}});
  } catch (const std::exception& e) {
    spdlog::error("session {} failed at {}: {}", s.info.session_id, stage, e.what());
    log_step(s, "error", 0.0, stage + ": " + e.what());
    {
      std::lock_guard lock(s.mutex);
      s.info.state = SessionState::Failed;
    }
    json error = {{"stage", stage}, {"message", e.what()}, {"partial_results", partial}};
    if (const auto* ie = dynamic_cast<const Error*>(&e)) error["code"] = to_string(ie->code());
    emit(s, EventKind::Error, error);
  }
}

QuerySessionInfo Workflow::session(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mutex);
  return s->info;
}

std::vector<SessionEvent> Workflow::events(const std::string& session_id, std::uint64_t from_seq,
                                           std::chrono::milliseconds wait) const {
  auto s = find_session(session_id);
  std::unique_lock lock(s->mutex);
  s->cv.wait_for(lock, wait, [&] {
    return s->events.size() > from_seq || (!s->events.empty() && s->events.back().terminal());
  });
  if (from_seq >= s->events.size()) return {};
  return {s->events.begin() + static_cast<std::ptrdiff_t>(from_seq), s->events.end()};
}

std::vector<SessionEvent> Workflow::wait_terminal(const std::string& session_id,
                                                  std::chrono::milliseconds timeout) const {
  auto s = find_session(session_id);
  std::unique_lock lock(s->mutex);
  s->cv.wait_for(lock, timeout, [&] { return !s->events.empty() && s->events.back().terminal(); });
  return s->events;
}

std::vector<StepLog> Workflow::get_session_log(const std::string& session_id) const {
  auto s = find_session(session_id);
  std::lock_guard lock(s->mutex);
  return s->logs;
}

ProblemCard Workflow::open_result(const std::string& session_id, const std::string& card_id) {
  auto s = find_session(session_id);
  {
    std::lock_guard lock(s->mutex);
    if (!s->final_cards.contains(card_id)) {
      throw Error(ErrorCode::NotInSession, card_id + " is not a final result of " + session_id);
    }
    if (!s->opened.insert(card_id).second) return store_.get_card(card_id);
  }
  return store_.record_access(card_id, now());
}

void Workflow::schedule_embedding(const std::string& card_id) {
  {
    std::lock_guard lock(jobs_mutex_);
    ++pending_jobs_;
  }
  boost::asio::post(*stages_pool_, [this, card_id] {
    bool changed = false;
    try {
      // Read the revision before the text so a concurrent edit can only
      // make this result stale, never mislabel it.
      const auto revision = store_.card_revision(card_id);
      const auto card = store_.get_card(card_id);
      changed = store_.set_card_embedding(card_id, embedder_->embed(card.problem_text + "\n" + card.insight_text),
                                          revision);
    } catch (const std::exception& e) {
      spdlog::warn("embedding job for card {} failed: {}", card_id, e.what());
    }
    std::function<void()> hook;
    {
      std::lock_guard lock(jobs_mutex_);
      hook = background_hook_;
    }
    if (changed && hook) hook();
    {
      std::lock_guard lock(jobs_mutex_);
      --pending_jobs_;
    }
    jobs_cv_.notify_all();
  });
}

std::size_t Workflow::embed_missing() {
  std::size_t queued = 0;
  for (const auto& card : store_.cards()) {
    if (card.embedding) continue;
    schedule_embedding(card.id);
    ++queued;
  }
  return queued;
}

void Workflow::wait_idle() {
  std::unique_lock lock(jobs_mutex_);
  jobs_cv_.wait(lock, [&] { return pending_jobs_ == 0; });
}

void Workflow::on_background_change(std::function<void()> hook) {
  std::lock_guard lock(jobs_mutex_);
  background_hook_ = std::move(hook);
}

CaptureResult Workflow::capture_insight(std::string_view raw_note) {
  CaptureResult out;
  out.parsed = gateway_->parse_insight_note(raw_note);
  out.card = store_.create_card(out.parsed.problem, out.parsed.insight, {}, now());
  schedule_embedding(out.card.id);
  std::vector<TagSuggestion> batch;
  for (const auto& tag : out.parsed.suggested_tags) batch.push_back({tag, out.card.id, out.parsed.problem});
  if (!batch.empty()) out.decisions = mapper_->map_batch(batch);
  spdlog::info("captured card {} with {} pending tag decisions", out.card.id, out.decisions.size());
  return out;
}

ProblemCard Workflow::append_insight(const std::string& card_id, std::string_view text) {
  if (blank(text)) throw Error(ErrorCode::EmptyNote, "appended insight is empty");
  const auto card = store_.get_card(card_id);
  auto updated = store_.set_insight_text(
      card_id, card.insight_text + "\n\n[" + utc_stamp(now()) + "]\n" + std::string(text));
  schedule_embedding(card_id);
  return updated;
}

InquirySession Workflow::start_inquiry(const std::optional<std::string>& problem_ref,
                                       const std::optional<std::string>& problem_text,
                                       const std::string& card_id) {
  const auto card = store_.get_card(card_id);
  InquirySession session;
  if (problem_ref) {
    if (const auto current = store_.find_card(*problem_ref)) {
      session.current_problem_text = current->problem_text;
    } else {
      std::shared_ptr<Session> q;
      {
        std::lock_guard lock(mutex_);
        if (auto it = sessions_.find(*problem_ref); it != sessions_.end()) q = it->second;
      }
      if (!q) throw Error(ErrorCode::UnknownCard, "no card or session " + *problem_ref);
      session.current_problem_text = q->info.query_text;
    }
    session.current_problem_ref = *problem_ref;
  } else if (problem_text && !blank(*problem_text)) {
    session.current_problem_text = *problem_text;
    session.current_problem_ref = "text";
  } else {
    throw Error(ErrorCode::InvalidArgument, "inquiry needs the current problem");
  }
  session.recalled_card_id = card.id;
  session.recalled_problem = card.problem_text;
  session.recalled_insight = card.insight_text;
  {
    std::lock_guard lock(mutex_);
    session.id = "i-" + std::to_string(next_inquiry_++);
  }
  gateway_->inquiry_turn(session, std::nullopt);
  std::lock_guard lock(mutex_);
  inquiries_[session.id] = session;
  return session;
}

InquiryTurn Workflow::inquiry_reply(const std::string& inquiry_id, const std::string& text) {
  InquirySession session = inquiry(inquiry_id);
  auto turn = gateway_->inquiry_turn(session, text);
  std::lock_guard lock(mutex_);
  inquiries_[inquiry_id] = std::move(session);
  return turn;
}

InquirySession Workflow::inquiry(const std::string& inquiry_id) const {
  std::lock_guard lock(mutex_);
  auto it = inquiries_.find(inquiry_id);
  if (it == inquiries_.end()) throw Error(ErrorCode::UnknownSession, inquiry_id);
  return it->second;
}

json to_json(const SessionEvent& event) {
  return {{"session_id", event.session_id},
          {"seq", event.seq},
          {"kind", to_string(event.kind)},
          {"payload", event.payload},
          {"emitted_at", event.emitted_at}};
}

json to_json(const StepLog& log) {
  return {{"session_id", log.session_id},
          {"step", log.step_name},
          {"duration_ms", log.duration_ms},
          {"detail", log.detail}};
}

}  // namespace irec
