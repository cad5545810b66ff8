#pragma once
// Maps loose tag suggestions onto the tag hierarchy.
//
//   prescreen        Score_cand = w_name*cos(E_new, E_tag) + w_ctx*cos(E_problem, E_tag)
//   phase 1          one LLM call per batch picks top-level branches
//   phase 2          one LLM call per suggestion picks map-vs-create in its branch
//   fallback         argmax w_conf*Score_cand + w_level/(1 + level)
//
// Nothing touches the graph until the user confirms a decision.

#include <cstdint>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "irec/embeddings.hpp"
#include "irec/graph_store.hpp"
#include "irec/llm_gateway.hpp"

namespace irec {

struct TagSuggestion {
  std::string raw_name;
  std::string source_card_id;
  std::string problem_context;
};

struct CandidateScore {
  std::string tag_id;
  std::string name;
  std::uint32_t level = 0;
  double score_cand = 0.0;
  double name_sim = 0.0;
  double context_sim = 0.0;
};

struct MapTo {
  std::string tag_id;
  friend bool operator==(const MapTo&, const MapTo&) = default;
};
struct CreateUnder {
  std::optional<std::string> parent_tag_id;  // empty: under the Uncategorized root
  std::string name;
  friend bool operator==(const CreateUnder&, const CreateUnder&) = default;
};
struct Rejected {
  friend bool operator==(const Rejected&, const Rejected&) = default;
};
using MappingOutcome = std::variant<MapTo, CreateUnder, Rejected>;

enum class DecisionOrigin { Llm, Fallback };
enum class DecisionState { Pending, Accepted, Modified, Vetoed };
enum class UserAction { Accept, Modify, Veto };

struct MappingDecision {
  std::string id;
  TagSuggestion suggestion;
  MappingOutcome outcome = Rejected{};
  DecisionOrigin origin = DecisionOrigin::Llm;
  bool confirmed = false;
  DecisionState state = DecisionState::Pending;
  std::optional<std::string> applied_tag_id;
};

struct DecisionLogEntry {
  std::string decision_id;
  std::string transition;  // "created", "accept", "modify", "veto"
  std::string detail;
};

struct TagMapperConfig {
  double w_name = 0.7;
  double w_context = 0.3;
  double w_conf = 0.7;
  double w_level = 0.3;
  std::size_t top_n = 5;
  std::string uncategorized_root = "Uncategorized";
};

// W_level(l) = 1 / (1 + l).
double level_weight(std::uint32_t level) noexcept;
double fallback_score(const CandidateScore& candidate, const TagMapperConfig& config = {}) noexcept;

// Argmax of the fallback score (ties: lower tag id); Rejected when empty.
MappingDecision fallback_select(const std::vector<CandidateScore>& candidates,
                                const TagMapperConfig& config = {});

// Per-suggestion phase-1 verdict: nullopt means the model did not answer
// usefully for it (route to fallback); an empty list means no branch fits.
using BranchSelection = std::vector<std::optional<std::vector<std::string>>>;

class TagMapper {
 public:
  TagMapper(GraphStore& store, LlmGateway& gateway,
            std::shared_ptr<const EmbeddingProvider> embedder, TagMapperConfig config = {});

  const TagMapperConfig& config() const noexcept { return config_; }

  // Top-N library tags for `suggestion`, optionally restricted to `scope`.
  std::vector<CandidateScore> prescreen(const TagSuggestion& suggestion, std::size_t top_n,
                                        const std::set<std::string>* scope = nullptr) const;

  // One LLM request for the whole batch. Throws LlmUnavailable or
  // MalformedLlmResponse; an empty branch list resolves nothing and skips
  // the call.
  BranchSelection phase1_branch_select(const std::vector<TagSuggestion>& batch,
                                       const std::vector<Tag>& branches);

  // One LLM request; any failure or out-of-branch answer yields the
  // fallback decision over `candidates`.
  MappingDecision phase2_precise_select(const TagSuggestion& suggestion,
                                        const std::string& branch_id,
                                        const std::vector<CandidateScore>& candidates);

  // Full pipeline for a batch; the decisions are queued as pending.
  std::vector<MappingDecision> map_batch(const std::vector<TagSuggestion>& batch);

  std::vector<MappingDecision> decisions(bool pending_only) const;
  MappingDecision get_decision(const std::string& id) const;

  // Applies (accept/modify) or discards (veto) a pending decision.
  MappingDecision confirm_decision(const std::string& id, UserAction action,
                                   const std::optional<MappingOutcome>& new_outcome = std::nullopt);

  std::vector<DecisionLogEntry> log() const;

  nlohmann::json save_state() const;
  void load_state(const nlohmann::json& state);

 private:
  MappingDecision enqueue(MappingDecision decision);
  std::optional<std::string> apply(const MappingDecision& decision);
  EmbeddingVector tag_embedding(const Tag& tag) const;

  GraphStore& store_;
  LlmGateway& gateway_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  TagMapperConfig config_;

  mutable std::mutex mutex_;
  std::uint64_t next_decision_ = 1;
  std::map<std::string, MappingDecision> decisions_;
  std::vector<std::string> order_;
  std::vector<DecisionLogEntry> log_;
};

std::string_view to_string(DecisionOrigin origin) noexcept;
std::string_view to_string(DecisionState state) noexcept;
UserAction parse_user_action(std::string_view text);

nlohmann::json outcome_to_json(const MappingOutcome& outcome);
// {"action": "map", "target_id"} | {"action": "create", "parent_id"?, "name"} | {"action": "reject"}
MappingOutcome outcome_from_json(const nlohmann::json& j);
nlohmann::json decision_to_json(const MappingDecision& decision);
MappingDecision decision_from_json(const nlohmann::json& j);

}  // namespace irec
