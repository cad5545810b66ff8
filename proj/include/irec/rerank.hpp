#pragma once
// Mode-aware multi-signal reranking:
//   S_final = w_rel*R + w_acc*A(n, M) + w_temp*T(dt, M) + w_div*D(|P|)

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "irec/graph_store.hpp"
#include "irec/recall.hpp"

namespace irec {

enum class LearningMode { Learning, Review, Balanced };

std::string_view to_string(LearningMode mode) noexcept;
// Accepts "learning", "review", "balanced" (any case). Throws InvalidArgument.
LearningMode parse_learning_mode(std::string_view text);

struct RerankWeights {
  double rel;
  double acc;
  double temp;
  double div;
};

// Fixed per-mode weight rows.
constexpr RerankWeights weights_for(LearningMode mode) noexcept {
  switch (mode) {
    case LearningMode::Learning: return {0.50, 0.20, 0.20, 0.10};
    case LearningMode::Review: return {0.40, 0.25, 0.25, 0.10};
    case LearningMode::Balanced: return {0.60, 0.15, 0.15, 0.10};
  }
  return {0.0, 0.0, 0.0, 0.0};
}

struct SignalParams {
  double access_scale = 10.0;    // K_acc
  double half_life_days = 30.0;  // T_half
  std::size_t path_count = kChannelCount;
};

// Learning/Balanced: ln(1+n)/ln(1+K), capped at 1. Review: 1/(1+n/K).
double access_score(std::uint64_t access_count, LearningMode mode, double access_scale = 10.0);

// Learning/Balanced: 1/(1+dt/T). Review: (dt/T)/(1+dt/T).
double temporal_score(double delta_days, LearningMode mode, double half_life_days = 30.0);

// (paths - 1) / (N - 1). Throws PathCountOutOfRange outside [1, N].
double diversity_score(std::size_t paths, std::size_t total_paths = kChannelCount);

struct RankedResult {
  std::string card_id;
  double relevance = 0.0;
  double access = 0.0;
  double temporal = 0.0;
  double diversity = 0.0;
  double final_score = 0.0;
  LearningMode mode = LearningMode::Balanced;
  std::set<Channel> path_set;
};

struct CardActivity {
  std::uint64_t access_count = 0;
  Timestamp created_at = 0;
  Timestamp last_accessed_at = 0;
};

using ActivityLookup = std::function<std::optional<CardActivity>(const std::string& card_id)>;

// Days since the last access, or since creation for never-opened cards.
double days_since_access(const CardActivity& activity, Timestamp now) noexcept;

// Scores every candidate and sorts by S_final, then card id. Throws
// UnknownCard if the lookup cannot resolve a candidate.
std::vector<RankedResult> rerank(const std::vector<RecallCandidate>& candidates, LearningMode mode,
                                 Timestamp now, const ActivityLookup& lookup,
                                 const SignalParams& params = {});

std::vector<RankedResult> rerank(const std::vector<RecallCandidate>& candidates, LearningMode mode,
                                 Timestamp now, const GraphStore& store,
                                 const SignalParams& params = {});

}  // namespace irec
