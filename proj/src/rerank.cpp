#include "irec/rerank.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "irec/error.hpp"

namespace irec {

std::string_view to_string(LearningMode mode) noexcept {
  switch (mode) {
    case LearningMode::Learning: return "learning";
    case LearningMode::Review: return "review";
    case LearningMode::Balanced: return "balanced";
  }
  return "unknown";
}

LearningMode parse_learning_mode(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "learning") return LearningMode::Learning;
  if (lower == "review") return LearningMode::Review;
  if (lower == "balanced") return LearningMode::Balanced;
  throw Error(ErrorCode::InvalidArgument, "unknown learning mode: " + std::string(text));
}

double access_score(std::uint64_t access_count, LearningMode mode, double access_scale) {
  const double n = static_cast<double>(access_count);
  if (mode == LearningMode::Review) return 1.0 / (1.0 + n / access_scale);
  // Saturates once n exceeds the scale.
  return std::min(1.0, std::log1p(n) / std::log1p(access_scale));
}

double temporal_score(double delta_days, LearningMode mode, double half_life_days) {
  const double x = std::max(0.0, delta_days) / half_life_days;
  if (mode == LearningMode::Review) return x / (1.0 + x);
  return 1.0 / (1.0 + x);
}

double diversity_score(std::size_t paths, std::size_t total_paths) {
  if (paths < 1 || paths > total_paths || total_paths < 2) {
    throw Error(ErrorCode::PathCountOutOfRange,
                std::to_string(paths) + " of " + std::to_string(total_paths));
  }
  return static_cast<double>(paths - 1) / static_cast<double>(total_paths - 1);
}

double days_since_access(const CardActivity& activity, Timestamp now) noexcept {
  const Timestamp since = activity.access_count == 0 ? activity.created_at
                                                     : activity.last_accessed_at;
  return static_cast<double>(std::max<Timestamp>(0, now - since)) / kSecondsPerDay;
}

std::vector<RankedResult> rerank(const std::vector<RecallCandidate>& candidates, LearningMode mode,
                                 Timestamp now, const ActivityLookup& lookup,
                                 const SignalParams& params) {
  const RerankWeights w = weights_for(mode);
  std::vector<RankedResult> out;
  out.reserve(candidates.size());
  for (const auto& cand : candidates) {
    const auto activity = lookup(cand.card_id);
    if (!activity) throw Error(ErrorCode::UnknownCard, cand.card_id);
    RankedResult r;
    r.card_id = cand.card_id;
    r.mode = mode;
    r.path_set = cand.path_set;
    r.relevance = cand.fused_relevance;
    r.access = access_score(activity->access_count, mode, params.access_scale);
    r.temporal = temporal_score(days_since_access(*activity, now), mode, params.half_life_days);
    r.diversity = diversity_score(cand.path_set.size(), params.path_count);
    r.final_score = w.rel * r.relevance + w.acc * r.access + w.temp * r.temporal + w.div * r.diversity;
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const RankedResult& a, const RankedResult& b) {
    return a.final_score != b.final_score ? a.final_score > b.final_score : a.card_id < b.card_id;
  });
  return out;
}

std::vector<RankedResult> rerank(const std::vector<RecallCandidate>& candidates, LearningMode mode,
                                 Timestamp now, const GraphStore& store,
                                 const SignalParams& params) {
  return rerank(
      candidates, mode, now,
      [&store](const std::string& id) -> std::optional<CardActivity> {
        auto card = store.find_card(id);
        if (!card) return std::nullopt;
        return CardActivity{card->access_count, card->created_at, card->last_accessed_at};
      },
      params);
}

}  // namespace irec
