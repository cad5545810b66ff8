#include "irec/llm_gateway.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <set>

#include "irec/error.hpp"
#include "irec/text.hpp"

namespace irec {

using nlohmann::json;

namespace {

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::string first_line(std::string_view note) {
  const auto first = note.find_first_not_of(" \t\r\n");
  auto rest = note.substr(first);
  auto line = rest.substr(0, rest.find('\n'));
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
  return std::string(line);
}

std::string_view role_name(InquiryRole role) { return role == InquiryRole::User ? "user" : "tutor"; }

}  // namespace

FilterLevel parse_filter_level(std::string_view text, const FilterConfig& config) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "strict") return FilterLevel::strict(config.strict_threshold);
  if (lower == "loose") return FilterLevel::loose(config.loose_threshold);
  throw Error(ErrorCode::InvalidArgument, "unknown filter level: " + std::string(text));
}

std::vector<AssessedResult> filter_by_level(const std::vector<AssessedResult>& assessed,
                                            const FilterLevel& level) {
  std::vector<AssessedResult> out;
  for (const auto& a : assessed) {
    if (!a.assessment || level.passes(a.assessment->score)) out.push_back(a);
  }
  return out;
}

LlmGateway::LlmGateway(std::shared_ptr<LlmClient> client, std::string tutor_directive)
    : client_(std::move(client)), tutor_directive_(std::move(tutor_directive)) {}

json LlmGateway::call(const json& request) {
  const std::string raw = client_->complete(request);
  json parsed;
  try {
    parsed = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedLlmResponse, e.what());
  }
  if (!parsed.is_object()) throw Error(ErrorCode::MalformedLlmResponse, "reply is not an object");
  return parsed;
}

ParsedInsight LlmGateway::parse_insight_note(std::string_view raw_note) {
  if (blank(raw_note)) throw Error(ErrorCode::EmptyNote, "note is empty");
  const json request = {{"task", "parse_insight"}, {"note", std::string(raw_note)}};
  try {
    const auto reply = call(request);
    ParsedInsight parsed;
    parsed.problem = reply.at("problem").get<std::string>();
    parsed.insight = reply.at("insight").get<std::string>();
    std::set<std::string> seen;
    for (const auto& t : reply.value("tags", json::array())) {
      const auto name = t.get<std::string>();
      if (blank(name)) continue;
      if (seen.insert(normalize_name(name)).second) parsed.suggested_tags.push_back(name);
    }
    if (blank(parsed.insight)) parsed.insight = std::string(raw_note);
    if (blank(parsed.problem)) {
      parsed.problem = first_line(raw_note);
      parsed.problem_incomplete = true;
    }
    return parsed;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::LlmUnavailable && e.code() != ErrorCode::MalformedLlmResponse) throw;
    spdlog::warn("insight parsing degraded: {}", e.what());
  } catch (const json::exception& e) {
    spdlog::warn("insight parsing degraded: {}", e.what());
  }
  ParsedInsight degraded;
  degraded.problem = first_line(raw_note);
  degraded.insight = std::string(raw_note);
  degraded.problem_incomplete = true;
  return degraded;
}

SimilarityAssessment LlmGateway::assess_similarity(std::string_view new_problem_text,
                                                   const ProblemCard& card) {
  if (blank(new_problem_text) || blank(card.problem_text)) {
    throw Error(ErrorCode::InvalidArgument, "similarity needs two non-empty problems");
  }
  const json request = {{"task", "assess_similarity"},
                        {"rubric", std::string(kSimilarityRubric)},
                        {"new_problem", std::string(new_problem_text)},
                        {"card_id", card.id},
                        {"card_problem", card.problem_text},
                        {"card_insight", card.insight_text}};
  const auto reply = call(request);
  SimilarityAssessment out;
  try {
    const auto& score = reply.at("score");
    if (!score.is_number_integer()) throw Error(ErrorCode::MalformedLlmResponse, "score is not an integer");
    out.score = score.get<int>();
    out.rationale = reply.value("rationale", std::string{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLlmResponse, e.what());
  }
  if (out.score < 0 || out.score > 3) {
    throw Error(ErrorCode::MalformedLlmResponse, "score out of range: " + std::to_string(out.score));
  }
  return out;
}

InquiryTurn LlmGateway::inquiry_turn(InquirySession& session,
                                     const std::optional<std::string>& user_message) {
  if (session.current_problem_ref.empty() || session.recalled_card_id.empty()) {
    throw Error(ErrorCode::InvalidArgument, "inquiry session lacks its context references");
  }
  if (session.turns.empty() && user_message) {
    throw Error(ErrorCode::InvalidArgument, "the tutor opens the dialogue");
  }
  if (!session.turns.empty() && (!user_message || blank(*user_message))) {
    throw Error(ErrorCode::InvalidArgument, "a follow-up turn needs a user message");
  }

  json history = json::array();
  for (const auto& t : session.turns) history.push_back({{"role", role_name(t.role)}, {"text", t.text}});
  if (user_message) history.push_back({{"role", "user"}, {"text", *user_message}});

  const json request = {{"task", "guided_inquiry"},
                        {"system", tutor_directive_},
                        {"current_problem_id", session.current_problem_ref},
                        {"current_problem", session.current_problem_text},
                        {"recalled_card_id", session.recalled_card_id},
                        {"recalled_problem", session.recalled_problem},
                        {"recalled_insight", session.recalled_insight},
                        {"history", history}};
  const auto reply = call(request);
  std::string text;
  try {
    text = reply.at("reply").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLlmResponse, e.what());
  }
  if (blank(text)) throw Error(ErrorCode::MalformedLlmResponse, "empty tutor reply");

  if (user_message) {
    session.turns.push_back({InquiryRole::User, *user_message, session.current_problem_ref,
                             session.recalled_card_id});
  }
  InquiryTurn tutor{InquiryRole::Tutor, text, session.current_problem_ref, session.recalled_card_id};
  session.turns.push_back(tutor);
  return tutor;
}

}  // namespace irec
