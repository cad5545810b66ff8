#include "irec/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include "irec/error.hpp"

namespace irec {

using nlohmann::json;

namespace {

using Setter = std::function<void(AppConfig&, const json&, const std::filesystem::path&)>;

template <typename T>
T as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidConfig, "wrong type for " + key);
  }
}

std::string path_value(const json& v, const std::string& key, const std::filesystem::path& base) {
  auto s = as<std::string>(v, key);
  if (s.empty() || base.empty()) return s;
  std::filesystem::path p(s);
  return p.is_absolute() ? s : (base / p).lexically_normal().string();
}

double positive(const json& v, const std::string& key) {
  const auto d = as<double>(v, key);
  if (!(d > 0.0)) throw Error(ErrorCode::InvalidConfig, key + " must be positive");
  return d;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"store.path", [](AppConfig& c, const json& v, const auto& b) { c.store_path = path_value(v, "store.path", b); }},
      {"store.id_seed", [](AppConfig& c, const json& v, const auto&) { c.id_seed = as<std::uint64_t>(v, "store.id_seed"); }},
      {"api.address", [](AppConfig& c, const json& v, const auto&) { c.api_address = as<std::string>(v, "api.address"); }},
      {"embedding.provider", [](AppConfig& c, const json& v, const auto&) { c.embedding.provider = as<std::string>(v, "embedding.provider"); }},
      {"embedding.dim", [](AppConfig& c, const json& v, const auto&) { c.embedding.dim = as<std::size_t>(v, "embedding.dim"); }},
      {"embedding.endpoint", [](AppConfig& c, const json& v, const auto&) { c.embedding.endpoint = as<std::string>(v, "embedding.endpoint"); }},
      {"embedding.model", [](AppConfig& c, const json& v, const auto&) { c.embedding.model = as<std::string>(v, "embedding.model"); }},
      {"embedding.timeout_s", [](AppConfig& c, const json& v, const auto&) { c.embedding.timeout_s = positive(v, "embedding.timeout_s"); }},
      {"llm.provider", [](AppConfig& c, const json& v, const auto&) { c.llm.provider = as<std::string>(v, "llm.provider"); }},
      {"llm.endpoint", [](AppConfig& c, const json& v, const auto&) { c.llm.endpoint = as<std::string>(v, "llm.endpoint"); }},
      {"llm.model", [](AppConfig& c, const json& v, const auto&) { c.llm.model = as<std::string>(v, "llm.model"); }},
      {"llm.fixtures", [](AppConfig& c, const json& v, const auto& b) { c.llm.fixtures = path_value(v, "llm.fixtures", b); }},
      {"llm.timeout_s", [](AppConfig& c, const json& v, const auto&) { c.llm.timeout_s = positive(v, "llm.timeout_s"); }},
      {"llm.tutor_directive", [](AppConfig& c, const json& v, const auto&) { c.llm.tutor_directive = as<std::string>(v, "llm.tutor_directive"); }},
      {"recall.k", [](AppConfig& c, const json& v, const auto&) { c.recall.k = as<std::size_t>(v, "recall.k"); }},
      {"recall.merge_weights.vector", [](AppConfig& c, const json& v, const auto&) { c.recall.weights.vector = as<double>(v, "recall.merge_weights.vector"); }},
      {"recall.merge_weights.fulltext", [](AppConfig& c, const json& v, const auto&) { c.recall.weights.fulltext = as<double>(v, "recall.merge_weights.fulltext"); }},
      {"recall.merge_weights.tag", [](AppConfig& c, const json& v, const auto&) { c.recall.weights.tag = as<double>(v, "recall.merge_weights.tag"); }},
      {"recall.multi_match_bonus", [](AppConfig& c, const json& v, const auto&) { c.recall.weights.multi_match_bonus_unit = as<double>(v, "recall.multi_match_bonus"); }},
      {"recall.tag_entry_threshold", [](AppConfig& c, const json& v, const auto&) { c.recall.tag_entry_threshold = as<double>(v, "recall.tag_entry_threshold"); }},
      {"recall.tag_depth_decay", [](AppConfig& c, const json& v, const auto&) { c.recall.tag_depth_decay = as<double>(v, "recall.tag_depth_decay"); }},
      {"recall.max_entry_tags", [](AppConfig& c, const json& v, const auto&) { c.recall.max_entry_tags = as<std::size_t>(v, "recall.max_entry_tags"); }},
      {"recall.timeout_s", [](AppConfig& c, const json& v, const auto&) { c.timeouts.recall_s = c.recall.timeout_s = positive(v, "recall.timeout_s"); }},
      {"rerank.k_acc", [](AppConfig& c, const json& v, const auto&) { c.signals.access_scale = positive(v, "rerank.k_acc"); }},
      {"rerank.t_half_days", [](AppConfig& c, const json& v, const auto&) { c.signals.half_life_days = positive(v, "rerank.t_half_days"); }},
      {"filter.strict_threshold", [](AppConfig& c, const json& v, const auto&) { c.filter.strict_threshold = as<int>(v, "filter.strict_threshold"); }},
      {"filter.loose_threshold", [](AppConfig& c, const json& v, const auto&) { c.filter.loose_threshold = as<int>(v, "filter.loose_threshold"); }},
      {"filter.assess_top", [](AppConfig& c, const json& v, const auto&) { c.filter.assess_top = as<std::size_t>(v, "filter.assess_top"); }},
      {"tag_mapper.top_n", [](AppConfig& c, const json& v, const auto&) { c.tag_mapper.top_n = as<std::size_t>(v, "tag_mapper.top_n"); }},
      {"tag_mapper.uncategorized_root", [](AppConfig& c, const json& v, const auto&) { c.tag_mapper.uncategorized_root = as<std::string>(v, "tag_mapper.uncategorized_root"); }},
      {"workflow.embed_timeout_s", [](AppConfig& c, const json& v, const auto&) { c.timeouts.embed_s = positive(v, "workflow.embed_timeout_s"); }},
      {"workflow.llm_timeout_s", [](AppConfig& c, const json& v, const auto&) { c.timeouts.llm_s = positive(v, "workflow.llm_timeout_s"); }},
      {"workflow.recall_timeout_s", [](AppConfig& c, const json& v, const auto&) { c.timeouts.recall_s = positive(v, "workflow.recall_timeout_s"); }},
  };
  return table;
}

bool has_prefix(const std::string& prefix) {
  for (const auto& [key, _] : setters()) {
    if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0 && key[prefix.size()] == '.') {
      return true;
    }
  }
  return false;
}

void walk(AppConfig& config, const json& node, const std::string& prefix, const std::filesystem::path& base) {
  for (const auto& [name, value] : node.items()) {
    const auto key = prefix.empty() ? name : prefix + "." + name;
    if (auto it = setters().find(key); it != setters().end()) {
      it->second(config, value, base);
    } else if (value.is_object() && has_prefix(key)) {
      walk(config, value, key, base);
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown key: " + key);
    }
  }
}

}  // namespace

AppConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  AppConfig config;
  walk(config, j, "", base_dir);
  config.recall.weights.validate();
  if (config.filter.strict_threshold < 0 || config.filter.strict_threshold > 3 ||
      config.filter.loose_threshold < 0 || config.filter.loose_threshold > 3) {
    throw Error(ErrorCode::InvalidConfig, "filter thresholds must lie in 0..3");
  }
  config.llm.timeout_s = std::min(config.llm.timeout_s, config.timeouts.llm_s);
  return config;
}

AppConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::absolute(path).parent_path());
}

AppConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return load_config_file(*explicit_path);
  if (const char* env = std::getenv("IREC_CONFIG"); env && *env) return load_config_file(env);
  return AppConfig{};
}

}  // namespace irec
