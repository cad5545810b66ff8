#include "irec/api.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "irec/error.hpp"

namespace irec {

using nlohmann::json;

namespace {

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string body_string(const json& body, const char* key, bool required = true) {
  if (body.is_object() && body.contains(key) && body.at(key).is_string()) return body.at(key).get<std::string>();
  if (!required) return {};
  throw Error(ErrorCode::InvalidArgument, std::string("missing string field '") + key + "'");
}

json decisions_json(const std::vector<MappingDecision>& decisions) {
  json out = json::array();
  for (const auto& d : decisions) out.push_back(decision_to_json(d));
  return out;
}

json inquiry_json(const InquirySession& s) {
  json turns = json::array();
  for (const auto& t : s.turns) {
    turns.push_back({{"role", t.role == InquiryRole::User ? "user" : "tutor"}, {"text", t.text}});
  }
  return {{"inquiry_id", s.id},
          {"current_problem_ref", s.current_problem_ref},
          {"recalled_card_id", s.recalled_card_id},
          {"turns", turns}};
}

json report_json(const ImportReport& r) {
  return {{"imported", r.imported}, {"failed", r.failed}, {"elapsed_ms", r.elapsed.count()}, {"errors", r.errors}};
}

}  // namespace

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownTag:
    case ErrorCode::UnknownCard:
    case ErrorCode::UnknownParent:
    case ErrorCode::UnknownDecision:
    case ErrorCode::UnknownSession:
      return 404;
    case ErrorCode::AlreadyConfirmed:
      return 409;
    case ErrorCode::LlmUnavailable:
    case ErrorCode::ProviderUnavailable:
      return 503;
    case ErrorCode::MalformedLlmResponse:
      return 502;
    case ErrorCode::IoError:
    case ErrorCode::VersionMismatch:
    case ErrorCode::CorruptSnapshot:
    case ErrorCode::InvalidConfig:
      return 500;
    default:
      return 400;
  }
}

json error_body(const Error& error) {
  return {{"error", {{"code", to_string(error.code())}, {"message", error.what()}}}};
}

json card_to_json(const ProblemCard& card, const GraphStore& store) {
  json tags = json::array();
  for (const auto& id : card.tag_ids) {
    const auto tag = store.find_tag(id);
    tags.push_back({{"id", id}, {"name", tag ? tag->name : ""}});
  }
  return {{"id", card.id},
          {"problem", card.problem_text},
          {"insight", card.insight_text},
          {"tags", tags},
          {"created_at", card.created_at},
          {"last_accessed_at", card.last_accessed_at},
          {"access_count", card.access_count},
          {"embedded", card.embedding.has_value()}};
}

std::pair<std::vector<std::string>, std::map<std::string, std::string>> split_target(std::string_view target) {
  const auto q = target.find('?');
  const auto path = target.substr(0, q);
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto slash = path.find('/', start);
    const auto seg = path.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
    if (!seg.empty()) parts.push_back(url_decode(seg));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  std::map<std::string, std::string> query;
  if (q != std::string_view::npos) {
    auto rest = target.substr(q + 1);
    while (!rest.empty()) {
      const auto amp = rest.find('&');
      const auto kv = rest.substr(0, amp);
      const auto eq = kv.find('=');
      if (!kv.empty()) {
        query[url_decode(kv.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(kv.substr(eq + 1));
      }
      if (amp == std::string_view::npos) break;
      rest = rest.substr(amp + 1);
    }
  }
  return {parts, query};
}

ApiService::ApiService(AppConfig config, Clock clock)
    : ApiService(config, make_llm_client(config.llm), std::move(clock)) {}

ApiService::ApiService(AppConfig config, std::shared_ptr<LlmClient> llm, Clock clock)
    : config_(std::move(config)), embedder_(make_embedding_provider(config_.embedding)) {
  GraphStore::Options options;
  options.tag_embedder = embedder_;
  options.id_seed = config_.id_seed;
  store_ = std::make_unique<GraphStore>(options);

  if (!config_.store_path.empty() && std::filesystem::exists(config_.store_path)) {
    store_->load_snapshot(config_.store_path);
  }

  WorkflowOptions wo;
  wo.recall = config_.recall;
  wo.signals = config_.signals;
  wo.filter = config_.filter;
  wo.tag_mapper = config_.tag_mapper;
  wo.timeouts = config_.timeouts;
  wo.tutor_directive = config_.llm.tutor_directive;
  wo.clock = std::move(clock);
  workflow_ = std::make_unique<Workflow>(*store_, embedder_, std::move(llm), std::move(wo));

  if (!config_.store_path.empty()) {
    const auto sidecar = decisions_path(config_.store_path);
    if (std::filesystem::exists(sidecar)) {
      std::ifstream in(sidecar);
      try {
        workflow_->tag_mapper().load_state(json::parse(in));
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::CorruptSnapshot, sidecar.string() + ": " + e.what());
      }
    }
    workflow_->on_background_change([this] { persist(); });
  }
  if (const auto queued = workflow_->embed_missing(); queued > 0) {
    spdlog::info("re-embedding {} cards without vectors", queued);
  }
}

ApiService::~ApiService() {
  workflow_->wait_idle();
  workflow_->on_background_change(nullptr);
  workflow_.reset();
}

std::filesystem::path ApiService::decisions_path(const std::filesystem::path& store_path) {
  auto p = store_path;
  p += ".decisions.json";
  return p;
}

void ApiService::persist() {
  if (config_.store_path.empty()) return;
  std::lock_guard lock(persist_mutex_);
  store_->save_snapshot(config_.store_path);
  const auto sidecar = decisions_path(config_.store_path);
  auto tmp = sidecar;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << workflow_->tag_mapper().save_state().dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, sidecar, ec);
  if (ec) throw Error(ErrorCode::IoError, "rename " + tmp.string() + ": " + ec.message());
}

ImportReport ApiService::import_stream(std::istream& input, std::size_t parallelism,
                                       const ProgressSink& progress) {
  auto report = store_->bulk_import(input, parallelism, progress, embedder_.get(), workflow_->now());
  persist();
  return report;
}

ApiResponse ApiService::handle(std::string_view method, std::string_view target, const json& body) {
  const auto [parts, query] = split_target(target);
  try {
    return dispatch(method, parts, query, body);
  } catch (const Error& e) {
    return {http_status(e.code()), error_body(e)};
  } catch (const json::exception& e) {
    return {400, error_body(Error(ErrorCode::InvalidArgument, e.what()))};
  }
}

ApiResponse ApiService::dispatch(std::string_view method, const std::vector<std::string>& p,
                                 const std::map<std::string, std::string>& query, const json& body) {
  auto& wf = *workflow_;
  const bool get = method == "GET";
  const bool post = method == "POST";
  const auto n = p.size();
  auto param = [&](const char* key, const std::string& fallback) {
    auto it = query.find(key);
    return it == query.end() ? fallback : it->second;
  };

  if (get && n == 1 && p[0] == "health") return {200, {{"status", "ok"}}};

  if (get && n == 1 && p[0] == "stats") {
    std::size_t embedded = 0;
    for (const auto& c : store_->cards()) embedded += c.embedding ? 1 : 0;
    return {200,
            {{"cards", store_->card_count()},
             {"tags", store_->tag_count()},
             {"edges", store_->edge_count()},
             {"embedded_cards", embedded},
             {"pending_decisions", wf.tag_mapper().decisions(true).size()}}};
  }

  if (post && n == 1 && p[0] == "query") {
    const auto text = body_string(body, "query");
    const auto mode = parse_learning_mode(body.value("mode", std::string("balanced")));
    const auto level = parse_filter_level(body.value("filter_level", std::string("strict")), config_.filter);
    return {200, {{"session_id", wf.submit_query(text, mode, level)}}};
  }

  if (n >= 2 && p[0] == "sessions") {
    const auto& id = p[1];
    if (get && n == 2) {
      const auto info = wf.session(id);
      return {200,
              {{"session_id", info.session_id},
               {"query", info.query_text},
               {"mode", to_string(info.mode)},
               {"filter_level", info.filter_level.name},
               {"started_at", info.started_at},
               {"state", to_string(info.state)}}};
    }
    if (get && n == 3 && p[2] == "events") {
      const auto from = std::stoull(param("from", "0"));
      const auto wait = std::chrono::milliseconds(std::stoll(param("wait_ms", "0")));
      const auto events = wf.events(id, from, wait);
      json list = json::array();
      bool terminal = false;
      for (const auto& e : events) {
        list.push_back(to_json(e));
        terminal = terminal || e.terminal();
      }
      return {200, {{"session_id", id}, {"events", list}, {"terminal", terminal}}};
    }
    if (get && n == 3 && p[2] == "log") {
      json steps = json::array();
      for (const auto& s : wf.get_session_log(id)) steps.push_back(to_json(s));
      return {200, {{"session_id", id}, {"steps", steps}}};
    }
    if (post && n == 3 && p[2] == "open") {
      const auto card = wf.open_result(id, body_string(body, "card_id"));
      persist();
      return {200, {{"card", card_to_json(card, *store_)}}};
    }
  }

  if (post && n == 1 && p[0] == "insights") {
    const auto note = body_string(body, "note", false);
    auto result = wf.capture_insight(note);
    persist();
    return {200,
            {{"card", card_to_json(store_->get_card(result.card.id), *store_)},
             {"problem_incomplete", result.parsed.problem_incomplete},
             {"suggested_tags", result.parsed.suggested_tags},
             {"decisions", decisions_json(result.decisions)}}};
  }

  if (n >= 2 && p[0] == "cards") {
    if (get && n == 2) return {200, card_to_json(store_->get_card(p[1]), *store_)};
    if (post && n == 3 && p[2] == "insights") {
      const auto card = wf.append_insight(p[1], body_string(body, "text", false));
      persist();
      return {200, {{"card", card_to_json(card, *store_)}}};
    }
  }

  if (n >= 1 && p[0] == "decisions") {
    auto& mapper = wf.tag_mapper();
    if (get && n == 1) {
      const bool pending = param("pending", "false") == "true";
      return {200, {{"decisions", decisions_json(mapper.decisions(pending))}}};
    }
    if (get && n == 2) return {200, decision_to_json(mapper.get_decision(p[1]))};
    if (post && n == 2) {
      const auto action = parse_user_action(body_string(body, "action"));
      std::optional<MappingOutcome> outcome;
      if (action == UserAction::Modify) {
        if (!body.contains("outcome")) throw Error(ErrorCode::InvalidArgument, "modify needs an outcome");
        outcome = outcome_from_json(body.at("outcome"));
      }
      const auto decision = mapper.confirm_decision(p[1], action, outcome);
      persist();
      return {200, {{"decision", decision_to_json(decision)}}};
    }
  }

  if (n >= 1 && p[0] == "inquiry") {
    if (post && n == 1) {
      std::optional<std::string> problem_id;
      std::optional<std::string> problem;
      if (body.contains("problem_id") && body.at("problem_id").is_string()) problem_id = body.at("problem_id").get<std::string>();
      if (body.contains("problem") && body.at("problem").is_string()) problem = body.at("problem").get<std::string>();
      return {200, inquiry_json(wf.start_inquiry(problem_id, problem, body_string(body, "card_id")))};
    }
    if (get && n == 2) return {200, inquiry_json(wf.inquiry(p[1]))};
    if (post && n == 3 && p[2] == "turns") {
      const auto turn = wf.inquiry_reply(p[1], body_string(body, "text"));
      auto out = inquiry_json(wf.inquiry(p[1]));
      out["reply"] = turn.text;
      return {200, out};
    }
  }

  if (post && n == 1 && p[0] == "import") {
    std::istringstream in(body_string(body, "records"));
    const auto parallelism = body.value("parallelism", std::size_t{1});
    return {200, report_json(import_stream(in, std::max<std::size_t>(1, parallelism), nullptr))};
  }

  return {404, error_body(Error(ErrorCode::InvalidArgument, "no route for " + std::string(method)))};
}

}  // namespace irec
