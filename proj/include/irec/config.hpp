#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>

#include "irec/embeddings.hpp"
#include "irec/llm.hpp"
#include "irec/llm_gateway.hpp"
#include "irec/recall.hpp"
#include "irec/rerank.hpp"
#include "irec/tag_mapper.hpp"

namespace irec {

struct StageTimeouts {
  double embed_s = 10.0;
  double llm_s = 30.0;
  double recall_s = 5.0;
};

struct AppConfig {
  std::string store_path;  // empty: in-memory only
  std::optional<std::uint64_t> id_seed;
  std::string api_address;  // empty: embedded mode
  EmbeddingConfig embedding;
  LlmConfig llm;
  RecallConfig recall;
  SignalParams signals;
  FilterConfig filter;
  TagMapperConfig tag_mapper;
  StageTimeouts timeouts;
};

// Recognized keys (dotted paths into nested objects):
//   store.path store.id_seed api.address
//   embedding.{provider,dim,endpoint,model,timeout_s}
//   llm.{provider,endpoint,model,fixtures,timeout_s,tutor_directive}
//   recall.{k,multi_match_bonus,tag_entry_threshold,tag_depth_decay,max_entry_tags,timeout_s}
//   recall.merge_weights.{vector,fulltext,tag}
//   rerank.{k_acc,t_half_days}
//   filter.{strict_threshold,loose_threshold,assess_top}
//   tag_mapper.{top_n,uncategorized_root}
//   workflow.{embed_timeout_s,llm_timeout_s,recall_timeout_s}
// Anything else is InvalidConfig. Relative paths resolve against `base_dir`.
AppConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
AppConfig load_config_file(const std::filesystem::path& path);

// `explicit_path` if given, else $IREC_CONFIG, else defaults.
AppConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path);

}  // namespace irec
