#pragma once

#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "irec/graph_store.hpp"
#include "irec/llm.hpp"
#include "irec/rerank.hpp"

namespace irec {

struct ParsedInsight {
  std::string problem;
  std::string insight;
  std::vector<std::string> suggested_tags;
  // Set when the provider failed and the problem statement is a placeholder
  // the user still has to complete.
  bool problem_incomplete = false;
};

// 0 = essentially identical, 1 = slight variation, 2 = same core method with
// a different surface, 3 = different method or topic.
struct SimilarityAssessment {
  int score = 3;
  std::string rationale;
};

struct FilterLevel {
  std::string name;
  int threshold = 2;

  static FilterLevel strict(int threshold = 2) { return {"strict", threshold}; }
  static FilterLevel loose(int threshold = 3) { return {"loose", threshold}; }
  bool passes(int score) const noexcept { return score <= threshold; }
};

struct FilterConfig {
  int strict_threshold = 2;
  int loose_threshold = 3;
  std::size_t assess_top = 10;
};

// Accepts "strict" or "loose" (any case). Throws InvalidArgument.
FilterLevel parse_filter_level(std::string_view text, const FilterConfig& config = {});

struct AssessedResult {
  RankedResult result;
  std::optional<SimilarityAssessment> assessment;  // empty = unassessed
};

// Keeps results whose score passes the level, and every unassessed result.
// Rank order is preserved; an empty output is the provide-nothing outcome.
std::vector<AssessedResult> filter_by_level(const std::vector<AssessedResult>& assessed,
                                            const FilterLevel& level);

enum class InquiryRole { User, Tutor };

struct InquiryTurn {
  InquiryRole role = InquiryRole::Tutor;
  std::string text;
  std::string current_problem_ref;
  std::string recalled_card_id;
};

struct InquirySession {
  std::string id;
  std::string current_problem_ref;
  std::string current_problem_text;
  std::string recalled_card_id;
  std::string recalled_problem;
  std::string recalled_insight;
  std::vector<InquiryTurn> turns;
};

class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<LlmClient> client, std::string tutor_directive);

  LlmClient& client() noexcept { return *client_; }

  // Sends `request` and parses the reply as a JSON object. Throws
  // LlmUnavailable or MalformedLlmResponse.
  nlohmann::json call(const nlohmann::json& request);

  // Throws EmptyNote. Provider failures degrade to the whole note as the
  // insight with a placeholder problem flagged incomplete.
  ParsedInsight parse_insight_note(std::string_view raw_note);

  // Throws LlmUnavailable or MalformedLlmResponse; the caller fails open.
  SimilarityAssessment assess_similarity(std::string_view new_problem_text, const ProblemCard& card);

  // Produces the next tutor turn. The opening call passes no user message.
  // On LlmUnavailable the session is left exactly as it was.
  InquiryTurn inquiry_turn(InquirySession& session, const std::optional<std::string>& user_message);

 private:
  std::shared_ptr<LlmClient> client_;
  std::string tutor_directive_;
};

inline constexpr std::string_view kSimilarityRubric =
    "Rate how closely the historical problem matches the new one on an ordinal 0-3 scale: "
    "0 essentially identical; 1 slight variation of the same problem; 2 same core method with a "
    "different surface form; 3 different method or topic. Reply {\"score\": int, "
    "\"rationale\": str}.";

}  // namespace irec
