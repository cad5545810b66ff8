#include "irec/tag_mapper.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>

#include "irec/error.hpp"
#include "irec/text.hpp"

namespace irec {

using nlohmann::json;

double level_weight(std::uint32_t level) noexcept { return 1.0 / (1.0 + static_cast<double>(level)); }

double fallback_score(const CandidateScore& candidate, const TagMapperConfig& config) noexcept {
  return config.w_conf * candidate.score_cand + config.w_level * level_weight(candidate.level);
}

MappingDecision fallback_select(const std::vector<CandidateScore>& candidates,
                                const TagMapperConfig& config) {
  MappingDecision decision;
  decision.origin = DecisionOrigin::Fallback;
  if (candidates.empty()) {
    decision.outcome = Rejected{};
    return decision;
  }
  const CandidateScore* best = &candidates.front();
  double best_score = fallback_score(*best, config);
  for (const auto& c : candidates) {
    const double s = fallback_score(c, config);
    if (s > best_score || (s == best_score && c.tag_id < best->tag_id)) {
      best = &c;
      best_score = s;
    }
  }
  decision.outcome = MapTo{best->tag_id};
  return decision;
}

TagMapper::TagMapper(GraphStore& store, LlmGateway& gateway,
                     std::shared_ptr<const EmbeddingProvider> embedder, TagMapperConfig config)
    : store_(store), gateway_(gateway), embedder_(std::move(embedder)), config_(std::move(config)) {}

EmbeddingVector TagMapper::tag_embedding(const Tag& tag) const {
  if (tag.embedding && tag.embedding->dim() == embedder_->dim()) return *tag.embedding;
  return embedder_->embed(tag.name);
}

std::vector<CandidateScore> TagMapper::prescreen(const TagSuggestion& suggestion, std::size_t top_n,
                                                 const std::set<std::string>* scope) const {
  const auto tags = store_.tags();
  if (tags.empty() || top_n == 0) return {};
  const auto e_new = embedder_->embed(suggestion.raw_name);
  const auto e_problem = suggestion.problem_context.find_first_not_of(" \t\r\n") == std::string::npos
                             ? e_new
                             : embedder_->embed(suggestion.problem_context);
  std::vector<CandidateScore> out;
  for (const auto& tag : tags) {
    if (scope && !scope->contains(tag.id)) continue;
    const auto e_tag = tag_embedding(tag);
    CandidateScore c;
    c.tag_id = tag.id;
    c.name = tag.name;
    c.level = tag.level;
    c.name_sim = cosine(e_new, e_tag);
    c.context_sim = cosine(e_problem, e_tag);
    c.score_cand = config_.w_name * c.name_sim + config_.w_context * c.context_sim;
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), [](const CandidateScore& a, const CandidateScore& b) {
    return a.score_cand != b.score_cand ? a.score_cand > b.score_cand : a.tag_id < b.tag_id;
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

BranchSelection TagMapper::phase1_branch_select(const std::vector<TagSuggestion>& batch,
                                                const std::vector<Tag>& branches) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty suggestion batch");
  if (branches.empty()) return BranchSelection(batch.size(), std::vector<std::string>{});

  json items = json::array();
  for (const auto& s : batch) items.push_back({{"tag", s.raw_name}, {"context", s.problem_context}});
  json branch_list = json::array();
  std::set<std::string> branch_ids;
  for (const auto& b : branches) {
    branch_list.push_back({{"id", b.id}, {"name", b.name}});
    branch_ids.insert(b.id);
  }
  const json request = {{"task", "branch_select"}, {"items", items}, {"branches", branch_list}};
  const auto reply = gateway_.call(request);

  BranchSelection selection(batch.size());
  try {
    const auto& reply_items = reply.at("items");
    if (!reply_items.is_array() || reply_items.empty()) {
      throw Error(ErrorCode::MalformedLlmResponse, "no items in branch selection");
    }
    for (const auto& item : reply_items) {
      const auto key = normalize_name(item.at("tag").get<std::string>());
      std::vector<std::string> chosen;
      const auto& ids = item.at("branch_ids");
      for (const auto& id : ids) {
        if (branch_ids.contains(id.get<std::string>())) chosen.push_back(id.get<std::string>());
      }
      // Branch ids that do not exist make the answer unusable for this tag.
      const bool usable = chosen.size() == ids.size();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (selection[i] || normalize_name(batch[i].raw_name) != key) continue;
        if (usable) selection[i] = chosen;
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLlmResponse, e.what());
  }
  return selection;
}

MappingDecision TagMapper::phase2_precise_select(const TagSuggestion& suggestion,
                                                 const std::string& branch_id,
                                                 const std::vector<CandidateScore>& candidates) {
  const auto branch = store_.get_tag(branch_id);
  std::set<std::string> subtree;
  for (const auto& td : store_.expand_tag_descendants({branch_id})) subtree.insert(td.tag_id);

  json cand = json::array();
  for (const auto& c : candidates) cand.push_back({{"id", c.tag_id}, {"name", c.name}, {"level", c.level}});
  const json request = {{"task", "precise_select"},
                        {"tag", suggestion.raw_name},
                        {"context", suggestion.problem_context},
                        {"branch", branch.id},
                        {"candidates", cand}};

  auto fall_back = [&](std::string_view why) {
    spdlog::warn("tag '{}' falls back in branch '{}': {}", suggestion.raw_name, branch.name, why);
    auto d = fallback_select(candidates, config_);
    d.suggestion = suggestion;
    return d;
  };

  json reply;
  try {
    reply = gateway_.call(request);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::LlmUnavailable && e.code() != ErrorCode::MalformedLlmResponse) throw;
    return fall_back(e.what());
  }

  MappingDecision decision;
  decision.suggestion = suggestion;
  decision.origin = DecisionOrigin::Llm;
  const auto action = reply.value("action", std::string{});
  if (action == "map") {
    const auto target = reply.value("target_id", std::string{});
    if (!subtree.contains(target)) return fall_back("map target outside the branch");
    decision.outcome = MapTo{target};
    return decision;
  }
  if (action == "create") {
    const auto parent = reply.value("parent_id", std::string{});
    const auto name = reply.value("name", std::string{});
    if (!subtree.contains(parent)) return fall_back("create parent outside the branch");
    if (name.find_first_not_of(" \t\r\n") == std::string::npos) return fall_back("create without a name");
    decision.outcome = CreateUnder{parent, name};
    return decision;
  }
  return fall_back("unknown action '" + action + "'");
}

std::vector<MappingDecision> TagMapper::map_batch(const std::vector<TagSuggestion>& batch) {
  if (batch.empty()) return {};
  std::vector<std::vector<CandidateScore>> global(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) global[i] = prescreen(batch[i], config_.top_n);

  BranchSelection selection;
  try {
    selection = phase1_branch_select(batch, store_.root_tags());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::LlmUnavailable && e.code() != ErrorCode::MalformedLlmResponse) throw;
    spdlog::warn("branch selection failed, using fallback for the batch: {}", e.what());
    selection.assign(batch.size(), std::nullopt);
  }

  std::vector<MappingDecision> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    MappingDecision decision;
    if (!selection[i]) {
      decision = fallback_select(global[i], config_);
      decision.suggestion = batch[i];
    } else if (selection[i]->empty()) {
      decision.suggestion = batch[i];
      decision.origin = DecisionOrigin::Llm;
      decision.outcome = CreateUnder{std::nullopt, batch[i].raw_name};
    } else {
      const auto& branch_id = selection[i]->front();
      std::set<std::string> subtree;
      for (const auto& td : store_.expand_tag_descendants({branch_id})) subtree.insert(td.tag_id);
      decision = phase2_precise_select(batch[i], branch_id, prescreen(batch[i], config_.top_n, &subtree));
    }
    out.push_back(enqueue(std::move(decision)));
  }
  return out;
}

MappingDecision TagMapper::enqueue(MappingDecision decision) {
  std::lock_guard lock(mutex_);
  decision.id = "dec-" + std::to_string(next_decision_++);
  decision.confirmed = false;
  decision.state = DecisionState::Pending;
  decisions_[decision.id] = decision;
  order_.push_back(decision.id);
  log_.push_back({decision.id, "created", outcome_to_json(decision.outcome).dump()});
  return decision;
}

std::vector<MappingDecision> TagMapper::decisions(bool pending_only) const {
  std::lock_guard lock(mutex_);
  std::vector<MappingDecision> out;
  for (const auto& id : order_) {
    const auto& d = decisions_.at(id);
    if (!pending_only || d.state == DecisionState::Pending) out.push_back(d);
  }
  return out;
}

MappingDecision TagMapper::get_decision(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = decisions_.find(id);
  if (it == decisions_.end()) throw Error(ErrorCode::UnknownDecision, id);
  return it->second;
}

std::optional<std::string> TagMapper::apply(const MappingDecision& decision) {
  const auto& card_id = decision.suggestion.source_card_id;
  if (const auto* map = std::get_if<MapTo>(&decision.outcome)) {
    store_.add_card_tag(card_id, map->tag_id);
    return map->tag_id;
  }
  if (const auto* create = std::get_if<CreateUnder>(&decision.outcome)) {
    std::string parent = create->parent_tag_id
                             ? *create->parent_tag_id
                             : store_.upsert_tag(config_.uncategorized_root, std::nullopt).id;
    const auto tag = store_.upsert_tag(create->name, parent);
    store_.add_card_tag(card_id, tag.id);
    return tag.id;
  }
  return std::nullopt;
}

MappingDecision TagMapper::confirm_decision(const std::string& id, UserAction action,
                                            const std::optional<MappingOutcome>& new_outcome) {
  std::lock_guard lock(mutex_);
  auto it = decisions_.find(id);
  if (it == decisions_.end()) throw Error(ErrorCode::UnknownDecision, id);
  MappingDecision& d = it->second;
  if (d.confirmed) throw Error(ErrorCode::AlreadyConfirmed, id);

  MappingDecision next = d;
  std::string detail;
  switch (action) {
    case UserAction::Accept:
      next.applied_tag_id = apply(next);
      next.state = DecisionState::Accepted;
      detail = outcome_to_json(next.outcome).dump();
      break;
    case UserAction::Modify:
      if (!new_outcome) throw Error(ErrorCode::InvalidArgument, "modify needs a new outcome");
      next.outcome = *new_outcome;
      next.applied_tag_id = apply(next);
      next.state = DecisionState::Modified;
      detail = outcome_to_json(d.outcome).dump() + " -> " + outcome_to_json(next.outcome).dump();
      break;
    case UserAction::Veto:
      next.state = DecisionState::Vetoed;
      detail = outcome_to_json(d.outcome).dump();
      break;
  }
  next.confirmed = true;
  d = next;
  const std::string transition = action == UserAction::Accept   ? "accept"
                                 : action == UserAction::Modify ? "modify"
                                                                : "veto";
  log_.push_back({id, transition, detail});
  spdlog::info("decision {} {}: {}", id, transition, detail);
  return d;
}

std::vector<DecisionLogEntry> TagMapper::log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

json TagMapper::save_state() const {
  std::lock_guard lock(mutex_);
  json decisions = json::array();
  for (const auto& id : order_) decisions.push_back(decision_to_json(decisions_.at(id)));
  json log = json::array();
  for (const auto& e : log_) {
    log.push_back({{"decision_id", e.decision_id}, {"transition", e.transition}, {"detail", e.detail}});
  }
  return {{"next_decision", next_decision_}, {"decisions", decisions}, {"log", log}};
}

void TagMapper::load_state(const json& state) {
  std::lock_guard lock(mutex_);
  try {
    decisions_.clear();
    order_.clear();
    log_.clear();
    next_decision_ = state.value("next_decision", std::uint64_t{1});
    for (const auto& d : state.at("decisions")) {
      auto decision = decision_from_json(d);
      order_.push_back(decision.id);
      decisions_[decision.id] = std::move(decision);
    }
    for (const auto& e : state.value("log", json::array())) {
      log_.push_back({e.at("decision_id").get<std::string>(), e.at("transition").get<std::string>(),
                      e.at("detail").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptSnapshot, std::string("decision state: ") + e.what());
  }
}

std::string_view to_string(DecisionOrigin origin) noexcept {
  return origin == DecisionOrigin::Llm ? "llm" : "fallback";
}

std::string_view to_string(DecisionState state) noexcept {
  switch (state) {
    case DecisionState::Pending: return "pending";
    case DecisionState::Accepted: return "accepted";
    case DecisionState::Modified: return "modified";
    case DecisionState::Vetoed: return "vetoed";
  }
  return "unknown";
}

UserAction parse_user_action(std::string_view text) {
  if (text == "accept") return UserAction::Accept;
  if (text == "modify") return UserAction::Modify;
  if (text == "veto") return UserAction::Veto;
  throw Error(ErrorCode::InvalidArgument, "unknown action: " + std::string(text));
}

json outcome_to_json(const MappingOutcome& outcome) {
  if (const auto* m = std::get_if<MapTo>(&outcome)) return {{"action", "map"}, {"target_id", m->tag_id}};
  if (const auto* c = std::get_if<CreateUnder>(&outcome)) {
    return {{"action", "create"},
            {"parent_id", c->parent_tag_id ? json(*c->parent_tag_id) : json(nullptr)},
            {"name", c->name}};
  }
  return {{"action", "reject"}};
}

MappingOutcome outcome_from_json(const json& j) {
  try {
    const auto action = j.at("action").get<std::string>();
    if (action == "map") return MapTo{j.at("target_id").get<std::string>()};
    if (action == "create") {
      CreateUnder c;
      if (j.contains("parent_id") && !j.at("parent_id").is_null()) {
        c.parent_tag_id = j.at("parent_id").get<std::string>();
      }
      c.name = j.at("name").get<std::string>();
      if (c.name.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "create needs a name");
      }
      return c;
    }
    if (action == "reject") return Rejected{};
    throw Error(ErrorCode::InvalidArgument, "unknown outcome action: " + action);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, e.what());
  }
}

json decision_to_json(const MappingDecision& d) {
  return {{"id", d.id},
          {"suggestion",
           {{"tag", d.suggestion.raw_name},
            {"card_id", d.suggestion.source_card_id},
            {"context", d.suggestion.problem_context}}},
          {"outcome", outcome_to_json(d.outcome)},
          {"origin", to_string(d.origin)},
          {"confirmed", d.confirmed},
          {"state", to_string(d.state)},
          {"applied_tag_id", d.applied_tag_id ? json(*d.applied_tag_id) : json(nullptr)}};
}

MappingDecision decision_from_json(const json& j) {
  MappingDecision d;
  d.id = j.at("id").get<std::string>();
  const auto& s = j.at("suggestion");
  d.suggestion = {s.at("tag").get<std::string>(), s.at("card_id").get<std::string>(),
                  s.at("context").get<std::string>()};
  d.outcome = outcome_from_json(j.at("outcome"));
  d.origin = j.at("origin").get<std::string>() == "llm" ? DecisionOrigin::Llm : DecisionOrigin::Fallback;
  d.confirmed = j.at("confirmed").get<bool>();
  const auto state = j.at("state").get<std::string>();
  d.state = state == "accepted"   ? DecisionState::Accepted
            : state == "modified" ? DecisionState::Modified
            : state == "vetoed"   ? DecisionState::Vetoed
                                  : DecisionState::Pending;
  if (!j.at("applied_tag_id").is_null()) d.applied_tag_id = j.at("applied_tag_id").get<std::string>();
  return d;
}

}  // namespace irec
